"""Trainable graph layers recorded on the autodiff tape.

The rational-filter layer runs K parallel stacks of T graph-convolution-
with-skip steps and averages them; each step propagates the previous state
through the graph and re-injects the layer input through a skip connection
(one recursion step of a first-order rational filter). Polynomial
baselines (single-hop self-loop convolution and Chebyshev) share the same
tape machinery.
"""

from dataclasses import dataclass

import numpy as np

from armagraph.autodiff import Node, Parameter, Tape
from armagraph.sparse import CsrMatrix


@dataclass(frozen=True)
class ArmaConfig:
    """K parallel stacks of depth T mapping f_in -> f_out features."""

    stacks: int
    depth: int
    f_in: int
    f_out: int
    activation: str = "relu"
    skip_dropout: float = 0.0
    bias: bool = False

    def __post_init__(self):
        if self.stacks < 1 or self.depth < 1:
            raise ValueError("stacks and depth must be >= 1")
        if not 0.0 <= self.skip_dropout < 1.0:
            raise ValueError("skip_dropout must be in [0, 1)")


@dataclass(frozen=True)
class GcnConfig:
    """Single-hop convolution on the self-loop-augmented adjacency."""

    f_in: int
    f_out: int
    gamma: float = 1.0
    activation: str = "relu"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")


@dataclass
class ConvSkipParams:
    """One stack's parameters: input map, shared propagation map, skip map.

    ``w_in`` applies at step 1 only; ``w_shared`` (present when depth >= 2)
    is reused at every later step; ``v`` is shared by all steps.
    """

    w_in: Parameter
    w_shared: Parameter | None
    v: Parameter
    bias: Parameter | None = None

    def parameters(self):
        out = [self.w_in, self.v]
        if self.w_shared is not None:
            out.append(self.w_shared)
        if self.bias is not None:
            out.append(self.bias)
        return out


def glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def init_conv_skip_params(rng, config: ArmaConfig, name: str) -> ConvSkipParams:
    w_in = Parameter(f"{name}.w_in", glorot(rng, (config.f_in, config.f_out)))
    w_shared = (
        Parameter(f"{name}.w_shared", glorot(rng, (config.f_out, config.f_out)))
        if config.depth >= 2
        else None
    )
    v = Parameter(f"{name}.v", glorot(rng, (config.f_in, config.f_out)))
    bias = Parameter(f"{name}.bias", np.zeros((1, config.f_out))) if config.bias else None
    return ConvSkipParams(w_in, w_shared, v, bias)


def conv_skip_forward(
    tape: Tape,
    prop_op: CsrMatrix,
    x_prev: Node,
    x_skip: Node,
    params: ConvSkipParams,
    step: int,
    activation: str = "relu",
    skip_dropout: float = 0.0,
    training: bool = False,
    rng=None,
) -> Node:
    """One convolution-with-skip step: act(P @ X_prev @ W + drop(X_skip) @ V).

    ``step`` is 1-based; the first step uses the input map, later steps the
    shared map. Dropout hits only the skip term, with a fresh mask per step.
    """
    w = params.w_in if step == 1 else params.w_shared
    if w is None:
        raise ValueError("depth-1 stack has no shared map; step must be 1")
    propagated = tape.matmul(tape.spmm(prop_op, x_prev), tape.param(w))
    skip = tape.dropout(x_skip, skip_dropout, training=training, rng=rng)
    pre = tape.add(propagated, tape.matmul(skip, tape.param(params.v)))
    if params.bias is not None:
        pre = tape.add_bias(pre, tape.param(params.bias))
    return tape.activation(pre, activation)


def arma_stack_outputs(
    tape: Tape,
    prop_op: CsrMatrix,
    x: Node,
    config: ArmaConfig,
    params: ConvSkipParams,
    training: bool = False,
    rng=None,
) -> list[Node]:
    """All T per-depth outputs of one stack, starting from state X."""
    outputs = []
    state = x
    for step in range(1, config.depth + 1):
        state = conv_skip_forward(
            tape,
            prop_op,
            state,
            x,
            params,
            step,
            activation=config.activation,
            skip_dropout=config.skip_dropout,
            training=training,
            rng=rng,
        )
        outputs.append(state)
    return outputs


def arma_layer_forward(
    tape: Tape,
    prop_op: CsrMatrix,
    x: Node,
    config: ArmaConfig,
    params_list,
    training: bool = False,
    rng=None,
) -> Node:
    """Average of K independent stacks, summed in stack order."""
    if len(params_list) != config.stacks:
        raise ValueError(f"expected {config.stacks} parameter sets, got {len(params_list)}")
    total = None
    for params in params_list:
        out = arma_stack_outputs(tape, prop_op, x, config, params, training, rng)[-1]
        total = out if total is None else tape.add(total, out)
    return tape.scale(total, 1.0 / config.stacks)


def gcn_layer_forward(
    tape: Tape,
    a_hat: CsrMatrix,
    x: Node,
    w: Parameter,
    activation: str = "relu",
    bias: Parameter | None = None,
) -> Node:
    """act(A_hat @ X @ W) on the self-loop-augmented adjacency."""
    pre = tape.matmul(tape.spmm(a_hat, x), tape.param(w))
    if bias is not None:
        pre = tape.add_bias(pre, tape.param(bias))
    return tape.activation(pre, activation)


def cheb_layer_forward(
    tape: Tape,
    l_scaled: CsrMatrix,
    x: Node,
    w_list,
    activation: str = "relu",
) -> Node:
    """act(sum_k T_k(L_scaled) @ X @ W_k) with per-order weight matrices."""
    if len(w_list) < 1:
        raise ValueError("need at least one weight matrix")
    t_prev = x
    out = tape.matmul(x, tape.param(w_list[0]))
    if len(w_list) > 1:
        t_cur = tape.spmm(l_scaled, x)
        out = tape.add(out, tape.matmul(t_cur, tape.param(w_list[1])))
        for w in w_list[2:]:
            t_next = tape.add(tape.scale(tape.spmm(l_scaled, t_cur), 2.0), tape.scale(t_prev, -1.0))
            out = tape.add(out, tape.matmul(t_next, tape.param(w)))
            t_prev, t_cur = t_cur, t_next
    return tape.activation(out, activation)


def param_count(config: ArmaConfig) -> int:
    """Trainable scalar count of the rational layer (bias-free default).

    Per stack: input map + skip map always, shared map only when depth >= 2;
    sharing makes the count independent of depth past 2.
    """
    per_stack = 2 * config.f_in * config.f_out
    if config.depth >= 2:
        per_stack += config.f_out * config.f_out
    if config.bias:
        per_stack += config.f_out
    return config.stacks * per_stack
