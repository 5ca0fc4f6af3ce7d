/** Decoding helpers for unpickled numpy arrays. */

import { NDArrayObj, UnpickleError } from "./pickle.js";

const ITEM_SIZES: Record<string, number> = {
  f8: 8,
  f4: 4,
  i8: 8,
  i4: 4,
  i2: 2,
  i1: 1,
  u8: 8,
  u4: 4,
  u2: 2,
  u1: 1,
  b1: 1,
};

export function elementCount(a: NDArrayObj): number {
  return a.shape.reduce((p, d) => p * d, 1);
}

export function toNumbers(a: NDArrayObj): number[] {
  if (!a.ready) throw new UnpickleError("array was never built");
  const kind = a.dtype.kind.replace(/^[<>|=]/, "");
  const size = ITEM_SIZES[kind];
  if (!size) throw new UnpickleError(`unsupported dtype ${a.dtype.kind}`);
  const n = elementCount(a);
  if (a.data.byteLength !== n * size) {
    throw new UnpickleError(
      `array payload is ${a.data.byteLength} bytes, expected ${n * size}`,
    );
  }
  const view = new DataView(a.data.buffer, a.data.byteOffset, a.data.byteLength);
  const le = a.dtype.littleEndian;
  const out = new Array<number>(n);
  for (let i = 0; i < n; i++) {
    const off = i * size;
    switch (kind) {
      case "f8":
        out[i] = view.getFloat64(off, le);
        break;
      case "f4":
        out[i] = view.getFloat32(off, le);
        break;
      case "i8":
        out[i] = Number(view.getBigInt64(off, le));
        break;
      case "i4":
        out[i] = view.getInt32(off, le);
        break;
      case "i2":
        out[i] = view.getInt16(off, le);
        break;
      case "i1":
        out[i] = view.getInt8(off);
        break;
      case "u8":
        out[i] = Number(view.getBigUint64(off, le));
        break;
      case "u4":
        out[i] = view.getUint32(off, le);
        break;
      case "u2":
        out[i] = view.getUint16(off, le);
        break;
      default: // u1 / b1
        out[i] = view.getUint8(off);
        break;
    }
  }
  return out;
}

export function toMatrix(a: NDArrayObj): number[][] {
  if (a.shape.length !== 2) {
    throw new UnpickleError(`expected a 2-D array, got shape [${a.shape}]`);
  }
  const [rows, cols] = a.shape;
  const flat = toNumbers(a);
  const out: number[][] = [];
  for (let r = 0; r < rows; r++) {
    out.push(flat.slice(r * cols, (r + 1) * cols));
  }
  return out;
}
