/**
 * Minimal unpickler for the upstream dataset archives.
 *
 * Supports the opcode subset emitted by CPython protocols 0-4 for the
 * object kinds those archives contain: nested dicts/lists/tuples,
 * numbers, strings, numpy ndarrays (via numpy.core.multiarray
 * _reconstruct), numpy dtypes, scipy CSR matrices, and
 * collections.defaultdict. Anything else raises.
 */

export class PyGlobal {
  constructor(
    readonly module: string,
    readonly name: string,
  ) {}
}

export interface DType {
  kind: string; // 'f8', 'i4', ...
  littleEndian: boolean;
}

export class NDArrayObj {
  shape: number[] = [];
  dtype: DType = { kind: "f8", littleEndian: true };
  data: Uint8Array = new Uint8Array(0);
  ready = false;
}

export class CsrMatrixObj {
  nRows = 0;
  nCols = 0;
  indptr!: NDArrayObj;
  indices!: NDArrayObj;
  data!: NDArrayObj;
}

class DTypeObj {
  constructor(
    public kind: string,
    public littleEndian = true,
  ) {}
}

export type PValue =
  | null
  | boolean
  | number
  | bigint
  | string
  | Uint8Array
  | PValue[]
  | Map<string | number, PValue>
  | PyGlobal
  | NDArrayObj
  | CsrMatrixObj
  | DTypeObj;

const MARK = Symbol("mark");

const CSR_CLASSES = new Set([
  "scipy.sparse._csr/csr_matrix",
  "scipy.sparse.csr/csr_matrix",
  "scipy.sparse/csr_matrix",
]);

const RECONSTRUCT = new Set([
  "numpy._core.multiarray/_reconstruct",
  "numpy.core.multiarray/_reconstruct",
]);

export class UnpickleError extends Error {}

export function unpickle(buf: Uint8Array): PValue {
  return new Unpickler(buf).load();
}

class Unpickler {
  private pos = 0;
  private stack: (PValue | typeof MARK)[] = [];
  private memo: PValue[] = [];
  private view: DataView;

  constructor(private buf: Uint8Array) {
    this.view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  }

  load(): PValue {
    for (;;) {
      const op = this.buf[this.pos++];
      if (op === undefined) throw new UnpickleError("truncated pickle");
      const result = this.dispatch(op);
      if (result !== undefined) return result;
    }
  }

  // returns the final value only for STOP
  private dispatch(op: number): PValue | undefined {
    switch (op) {
      case 0x80: // PROTO
        this.pos += 1;
        return;
      case 0x95: // FRAME
        this.pos += 8;
        return;
      case 0x2e: // STOP '.'
        return this.pop();
      case 0x28: // MARK '('
        this.stack.push(MARK);
        return;
      case 0x30: // POP '0'
        this.pop();
        return;
      case 0x31: // POP_MARK '1'
        this.popToMark();
        return;
      case 0x32: // DUP '2'
        this.stack.push(this.stack[this.stack.length - 1]);
        return;
      case 0x4e: // NONE 'N'
        this.stack.push(null);
        return;
      case 0x88: // NEWTRUE
        this.stack.push(true);
        return;
      case 0x89: // NEWFALSE
        this.stack.push(false);
        return;
      case 0x4b: // BININT1 'K'
        this.stack.push(this.buf[this.pos++]);
        return;
      case 0x4d: // BININT2 'M'
        this.stack.push(this.view.getUint16(this.pos, true));
        this.pos += 2;
        return;
      case 0x4a: // BININT 'J'
        this.stack.push(this.view.getInt32(this.pos, true));
        this.pos += 4;
        return;
      case 0x49: {
        // INT 'I' (text); protocol 0 encodes bools as 01/00
        const line = this.readLine();
        if (line === "01") this.stack.push(true);
        else if (line === "00") this.stack.push(false);
        else this.stack.push(parseInt(line, 10));
        return;
      }
      case 0x4c: // LONG 'L'
        this.stack.push(bigToNumber(BigInt(this.readLine().replace(/L$/, ""))));
        return;
      case 0x8a: {
        // LONG1
        const n = this.buf[this.pos++];
        this.stack.push(bigToNumber(this.readLong(n)));
        return;
      }
      case 0x8b: {
        // LONG4
        const n = this.view.getUint32(this.pos, true);
        this.pos += 4;
        this.stack.push(bigToNumber(this.readLong(n)));
        return;
      }
      case 0x47: // BINFLOAT 'G' (big-endian)
        this.stack.push(this.view.getFloat64(this.pos, false));
        this.pos += 8;
        return;
      case 0x46: // FLOAT 'F'
        this.stack.push(parseFloat(this.readLine()));
        return;
      case 0x58: {
        // BINUNICODE 'X'
        const n = this.view.getUint32(this.pos, true);
        this.pos += 4;
        this.stack.push(this.readUtf8(n));
        return;
      }
      case 0x8c: {
        // SHORT_BINUNICODE
        const n = this.buf[this.pos++];
        this.stack.push(this.readUtf8(n));
        return;
      }
      case 0x56: // UNICODE 'V'
        this.stack.push(this.readLine());
        return;
      case 0x55: {
        // SHORT_BINSTRING 'U' (latin1 text in py2 pickles)
        const n = this.buf[this.pos++];
        this.stack.push(this.readLatin1(n));
        return;
      }
      case 0x54: {
        // BINSTRING 'T'
        const n = this.view.getUint32(this.pos, true);
        this.pos += 4;
        this.stack.push(this.readLatin1(n));
        return;
      }
      case 0x53: // STRING 'S'
        this.stack.push(unquote(this.readLine()));
        return;
      case 0x42: {
        // BINBYTES 'B'
        const n = this.view.getUint32(this.pos, true);
        this.pos += 4;
        this.stack.push(this.readBytes(n));
        return;
      }
      case 0x43: {
        // SHORT_BINBYTES 'C'
        const n = this.buf[this.pos++];
        this.stack.push(this.readBytes(n));
        return;
      }
      case 0x29: // EMPTY_TUPLE ')'
        this.stack.push([]);
        return;
      case 0x85: // TUPLE1
        this.stack.push([this.pop()]);
        return;
      case 0x86: {
        // TUPLE2
        const b = this.pop();
        const a = this.pop();
        this.stack.push([a, b]);
        return;
      }
      case 0x87: {
        // TUPLE3
        const c = this.pop();
        const b = this.pop();
        const a = this.pop();
        this.stack.push([a, b, c]);
        return;
      }
      case 0x74: // TUPLE 't'
        this.stack.push(this.popToMark());
        return;
      case 0x5d: // EMPTY_LIST ']'
        this.stack.push([]);
        return;
      case 0x6c: // LIST 'l'
        this.stack.push(this.popToMark());
        return;
      case 0x61: {
        // APPEND 'a'
        const item = this.pop();
        this.topList().push(item);
        return;
      }
      case 0x65: {
        // APPENDS 'e'
        const items = this.popToMark();
        this.topList().push(...items);
        return;
      }
      case 0x7d: // EMPTY_DICT '}'
        this.stack.push(new Map());
        return;
      case 0x64: {
        // DICT 'd'
        const items = this.popToMark();
        const map = new Map<string | number, PValue>();
        for (let i = 0; i < items.length; i += 2) {
          map.set(asKey(items[i]), items[i + 1]);
        }
        this.stack.push(map);
        return;
      }
      case 0x73: {
        // SETITEM 's'
        const value = this.pop();
        const key = this.pop();
        this.topMap().set(asKey(key), value);
        return;
      }
      case 0x75: {
        // SETITEMS 'u'
        const items = this.popToMark();
        const map = this.topMap();
        for (let i = 0; i < items.length; i += 2) {
          map.set(asKey(items[i]), items[i + 1]);
        }
        return;
      }
      case 0x63: {
        // GLOBAL 'c'
        const module = this.readLine();
        const name = this.readLine();
        this.stack.push(new PyGlobal(module, name));
        return;
      }
      case 0x93: {
        // STACK_GLOBAL
        const name = this.pop();
        const module = this.pop();
        this.stack.push(new PyGlobal(String(module), String(name)));
        return;
      }
      case 0x71: // BINPUT 'q'
        this.memo[this.buf[this.pos++]] = this.top();
        return;
      case 0x72: // LONG_BINPUT 'r'
        this.memo[this.view.getUint32(this.pos, true)] = this.top();
        this.pos += 4;
        return;
      case 0x70: // PUT 'p'
        this.memo[parseInt(this.readLine(), 10)] = this.top();
        return;
      case 0x94: // MEMOIZE
        this.memo.push(this.top());
        return;
      case 0x68: // BINGET 'h'
        this.stack.push(this.memo[this.buf[this.pos++]]);
        return;
      case 0x6a: // LONG_BINGET 'j'
        this.stack.push(this.memo[this.view.getUint32(this.pos, true)]);
        this.pos += 4;
        return;
      case 0x67: // GET 'g'
        this.stack.push(this.memo[parseInt(this.readLine(), 10)]);
        return;
      case 0x52: {
        // REDUCE 'R'
        const args = this.pop() as PValue[];
        const callable = this.pop();
        this.stack.push(this.reduce(callable, args));
        return;
      }
      case 0x81: {
        // NEWOBJ
        const args = this.pop() as PValue[];
        const cls = this.pop();
        this.stack.push(this.newobj(cls, args));
        return;
      }
      case 0x62: {
        // BUILD 'b'
        const state = this.pop();
        const obj = this.pop();
        this.stack.push(build(obj, state));
        return;
      }
      default:
        throw new UnpickleError(
          `unsupported opcode 0x${op.toString(16)} at offset ${this.pos - 1}`,
        );
    }
  }

  private reduce(callable: PValue, args: PValue[]): PValue {
    if (!(callable instanceof PyGlobal)) {
      throw new UnpickleError("REDUCE callable is not a global");
    }
    const key = `${callable.module}/${callable.name}`;
    if (RECONSTRUCT.has(key)) return new NDArrayObj();
    if (key === "numpy/dtype") return new DTypeObj(String(args[0]));
    if (key === "_codecs/encode") {
      return Buffer.from(String(args[0]), "latin1");
    }
    if (key === "collections/defaultdict") return new Map();
    if (key === "builtins/list" || key === "__builtin__/list") {
      return args.length ? (args[0] as PValue[]) : [];
    }
    if (key === "builtins/bytes" || key === "__builtin__/bytes") {
      if (args.length === 0) return new Uint8Array(0);
      const arg = args[0];
      if (Array.isArray(arg)) return Uint8Array.from(arg.map((v) => Number(v)));
      if (typeof arg === "string") return Buffer.from(arg, "latin1");
      throw new UnpickleError("unsupported bytes() argument");
    }
    if (CSR_CLASSES.has(key)) return new CsrMatrixObj();
    throw new UnpickleError(`unsupported reduce target ${key}`);
  }

  private newobj(cls: PValue, args: PValue[]): PValue {
    if (!(cls instanceof PyGlobal)) {
      throw new UnpickleError("NEWOBJ class is not a global");
    }
    const key = `${cls.module}/${cls.name}`;
    if (CSR_CLASSES.has(key)) return new CsrMatrixObj();
    if (key === "collections/defaultdict") return new Map();
    if (key === "numpy/ndarray") return new NDArrayObj();
    throw new UnpickleError(`unsupported class ${key}`);
  }

  private top(): PValue {
    const v = this.stack[this.stack.length - 1];
    if (v === MARK) throw new UnpickleError("unexpected mark on top");
    return v;
  }

  private pop(): PValue {
    const v = this.stack.pop();
    if (v === undefined || v === MARK) throw new UnpickleError("stack underflow");
    return v;
  }

  private popToMark(): PValue[] {
    const items: PValue[] = [];
    for (;;) {
      const v = this.stack.pop();
      if (v === undefined) throw new UnpickleError("no mark found");
      if (v === MARK) break;
      items.push(v);
    }
    return items.reverse();
  }

  private topList(): PValue[] {
    const v = this.top();
    if (!Array.isArray(v)) throw new UnpickleError("expected a list on the stack");
    return v;
  }

  private topMap(): Map<string | number, PValue> {
    const v = this.top();
    if (!(v instanceof Map)) throw new UnpickleError("expected a dict on the stack");
    return v;
  }

  private readLine(): string {
    const nl = this.buf.indexOf(0x0a, this.pos);
    if (nl < 0) throw new UnpickleError("unterminated line");
    const line = this.readLatin1(nl - this.pos);
    this.pos = nl + 1;
    return line;
  }

  private readUtf8(n: number): string {
    const s = Buffer.from(this.buf.subarray(this.pos, this.pos + n)).toString("utf8");
    this.pos += n;
    return s;
  }

  private readLatin1(n: number): string {
    const s = Buffer.from(this.buf.subarray(this.pos, this.pos + n)).toString("latin1");
    this.pos += n;
    return s;
  }

  private readBytes(n: number): Uint8Array {
    const b = this.buf.subarray(this.pos, this.pos + n);
    this.pos += n;
    return b;
  }

  private readLong(n: number): bigint {
    // little-endian two's complement
    if (n === 0) return 0n;
    let value = 0n;
    for (let i = n - 1; i >= 0; i--) {
      value = (value << 8n) | BigInt(this.buf[this.pos + i]);
    }
    if (this.buf[this.pos + n - 1] & 0x80) {
      value -= 1n << BigInt(8 * n);
    }
    this.pos += n;
    return value;
  }
}

function bigToNumber(v: bigint): number | bigint {
  return v >= BigInt(Number.MIN_SAFE_INTEGER) && v <= BigInt(Number.MAX_SAFE_INTEGER)
    ? Number(v)
    : v;
}

function asKey(v: PValue): string | number {
  if (typeof v === "string" || typeof v === "number") return v;
  throw new UnpickleError(`unsupported dict key of type ${typeof v}`);
}

function unquote(s: string): string {
  const body = s.slice(1, -1);
  return body.replace(/\\(x[0-9a-fA-F]{2}|.)/g, (_, esc: string) => {
    if (esc.startsWith("x")) return String.fromCharCode(parseInt(esc.slice(1), 16));
    const simple: Record<string, string> = { n: "\n", t: "\t", r: "\r", "\\": "\\", "'": "'", '"': '"' };
    return simple[esc] ?? esc;
  });
}

function build(obj: PValue, state: PValue): PValue {
  if (obj instanceof NDArrayObj) {
    const tup = state as PValue[];
    const shape = (tup[1] as PValue[]).map((d) => Number(d));
    const dtype = tup[2] as unknown as DTypeObj;
    const fortran = tup[3] as boolean;
    const data = tup[4];
    if (fortran) throw new UnpickleError("fortran-ordered arrays are not supported");
    obj.shape = shape;
    obj.dtype = { kind: dtype.kind, littleEndian: dtype.littleEndian };
    obj.data = data instanceof Uint8Array ? data : Buffer.from(String(data), "latin1");
    obj.ready = true;
    return obj;
  }
  if (obj instanceof CsrMatrixObj) {
    const map = state as Map<string | number, PValue>;
    const shape = map.get("_shape") as PValue[];
    obj.nRows = Number(shape[0]);
    obj.nCols = Number(shape[1]);
    obj.indptr = map.get("indptr") as NDArrayObj;
    obj.indices = map.get("indices") as NDArrayObj;
    obj.data = map.get("data") as NDArrayObj;
    if (!obj.indptr?.ready || !obj.indices?.ready || !obj.data?.ready) {
      throw new UnpickleError("incomplete CSR state");
    }
    return obj;
  }
  if (obj instanceof DTypeObj) {
    const tup = state as PValue[];
    const order = String(tup[1]);
    obj.littleEndian = order !== ">";
    return obj;
  }
  if (obj instanceof Map && state instanceof Map) {
    for (const [k, v] of state) obj.set(k, v);
    return obj;
  }
  throw new UnpickleError("unsupported BUILD target");
}
