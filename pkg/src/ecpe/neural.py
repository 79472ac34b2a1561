"""Differentiable building blocks on top of torch tensors.

Gradients come from torch autograd; :func:`grad_check` verifies them against
central finite differences.  Every layer is initialised from U(-0.01, 0.01)
through an explicit ``torch.Generator`` so runs are reproducible per seed.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import torch
from torch import nn

INIT_SCALE = 0.01
PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


class NumericError(ArithmeticError):
    """Raised when a loss or gradient stops being finite."""


def uniform_(tensor: torch.Tensor, generator: torch.Generator, scale: float = INIT_SCALE):
    with torch.no_grad():
        tensor.uniform_(-scale, scale, generator=generator)
    return tensor


def _lstm_direction(x_proj, mask, w_hh, reverse):
    batch, steps, _ = x_proj.shape
    hidden = w_hh.shape[1]
    h = x_proj.new_zeros(batch, hidden)
    c = x_proj.new_zeros(batch, hidden)
    outs = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        gates = torch.addmm(x_proj[:, t], h, w_hh.T)
        i, f, g, o = gates.chunk(4, dim=-1)
        c_new = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h_new = torch.sigmoid(o) * torch.tanh(c_new)
        m = mask[:, t]
        c = torch.where(m, c_new, c)
        h = torch.where(m, h_new, h)
        outs[t] = h * m
    return torch.stack(outs, dim=1)


def length_mask(lengths: torch.Tensor, steps: int) -> torch.Tensor:
    return torch.arange(steps, device=lengths.device)[None, :] < lengths[:, None]


def bilstm_forward(inputs: torch.Tensor, lengths, params: "BiLSTM") -> torch.Tensor:
    """Run a masked bidirectional LSTM.

    ``inputs`` is ``(batch, steps, d_in)`` (a 2-D input is treated as one
    sequence).  The backward direction starts at each sequence's own last valid
    step; outputs at padded steps are zero.  Returns ``(batch, steps, 2h)``.
    """
    single = inputs.dim() == 2
    if single:
        inputs = inputs[None]
    lengths = torch.as_tensor(lengths, dtype=torch.long).reshape(-1)
    if torch.any(lengths < 1):
        raise ValueError("empty sequence: valid length must be >= 1")
    if torch.any(lengths > inputs.shape[1]):
        raise ValueError("valid length exceeds sequence length")
    mask = length_mask(lengths, inputs.shape[1])[..., None]
    fwd = _lstm_direction(inputs @ params.w_ih_f.T + params.b_f, mask, params.w_hh_f, False)
    bwd = _lstm_direction(inputs @ params.w_ih_b.T + params.b_b, mask, params.w_hh_b, True)
    out = torch.cat([fwd, bwd], dim=-1)
    return out[0] if single else out


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    scores = scores.masked_fill(~mask, float("-inf"))
    return torch.softmax(scores, dim=-1)


def attention_pool(hiddens: torch.Tensor, lengths, params: "AdditiveAttention",
                   return_weights: bool = False):
    """Additive attention pooling ``s = sum_t a_t h_t`` with ``a = softmax(u . tanh(W h_t + b))``."""
    single = hiddens.dim() == 2
    if single:
        hiddens = hiddens[None]
    lengths = torch.as_tensor(lengths, dtype=torch.long).reshape(-1)
    if torch.any(lengths < 1):
        raise ValueError("valid length must be >= 1")
    scores = torch.tanh(hiddens @ params.w.T + params.b) @ params.u
    alpha = masked_softmax(scores, length_mask(lengths, hiddens.shape[1]))
    pooled = torch.einsum("bt,btd->bd", alpha, hiddens)
    if single:
        pooled, alpha = pooled[0], alpha[0]
    return (pooled, alpha) if return_weights else pooled


def softmax_head(r: torch.Tensor, w: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.softmax(r @ w.T + b, dim=-1)


def cross_entropy(pred: torch.Tensor, gold) -> torch.Tensor:
    """Per-row ``-log pred[gold]`` with probabilities clamped at 1e-12."""
    gold = torch.as_tensor(gold, dtype=torch.long, device=pred.device)
    if pred.dim() == 1:
        return -torch.log(pred[gold].clamp_min(PROB_FLOOR))
    picked = pred.gather(-1, gold[..., None])[..., 0]
    return -torch.log(picked.clamp_min(PROB_FLOOR))


def dropout(x: torch.Tensor, keep_prob: float, generator: torch.Generator | None, training: bool):
    if not training or keep_prob >= 1.0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype) < keep_prob
    return x * keep / keep_prob


class BiLSTM(nn.Module):
    def __init__(self, d_in: int, hidden: int, generator: torch.Generator, dtype=torch.float32):
        super().__init__()
        if hidden <= 0:
            raise ValueError("hidden size must be positive")
        self.hidden = hidden
        for d in ("f", "b"):
            setattr(self, f"w_ih_{d}", nn.Parameter(torch.empty(4 * hidden, d_in, dtype=dtype)))
            setattr(self, f"w_hh_{d}", nn.Parameter(torch.empty(4 * hidden, hidden, dtype=dtype)))
            setattr(self, f"b_{d}", nn.Parameter(torch.empty(4 * hidden, dtype=dtype)))
        for p in self.parameters():
            uniform_(p, generator)

    def forward(self, inputs, lengths):
        return bilstm_forward(inputs, lengths, self)


class AdditiveAttention(nn.Module):
    def __init__(self, d_in: int, d_att: int, generator: torch.Generator, dtype=torch.float32):
        super().__init__()
        self.w = nn.Parameter(torch.empty(d_att, d_in, dtype=dtype))
        self.b = nn.Parameter(torch.empty(d_att, dtype=dtype))
        self.u = nn.Parameter(torch.empty(d_att, dtype=dtype))
        for p in self.parameters():
            uniform_(p, generator)

    def forward(self, hiddens, lengths):
        return attention_pool(hiddens, lengths, self)


class SoftmaxHead(nn.Module):
    def __init__(self, d_in: int, n_classes: int, generator: torch.Generator, dtype=torch.float32):
        super().__init__()
        self.w = nn.Parameter(torch.empty(n_classes, d_in, dtype=dtype))
        self.b = nn.Parameter(torch.empty(n_classes, dtype=dtype))
        for p in self.parameters():
            uniform_(p, generator)

    def forward(self, r):
        return softmax_head(r, self.w, self.b)


# --- optimisation -----------------------------------------------------------


@dataclass
class OptimizerState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2: float = 1e-5
    # parameter name -> multiplier on ``l2``; names absent here are not penalised
    l2_scale: dict = field(default_factory=dict)
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@torch.no_grad()
def adam_step(params: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor | None],
              state: OptimizerState) -> OptimizerState:
    """One in-place Adam update with bias correction.

    The L2 penalty ``(l2 * scale / 2) * ||p||^2`` is folded into the gradient of
    every parameter listed in ``state.l2_scale``.
    """
    for name, g in grads.items():
        if g is not None and not torch.all(torch.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        g = torch.zeros_like(p) if g is None else g.clone()
        scale = state.l2_scale.get(name, 0.0)
        if scale and state.l2:
            g.add_(p, alpha=state.l2 * scale)
        if name not in state.m:
            state.m[name] = torch.zeros_like(p)
            state.v[name] = torch.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m.mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
        v.mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
        p.sub_(state.lr * (m / c1) / ((v / c2).sqrt() + state.eps))
    return state


# --- gradient verification --------------------------------------------------


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: dict

    @property
    def worst(self) -> str:
        return max(self.per_param, key=self.per_param.get)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Entry-wise ``|a - n| / max(|a|, |n|, floor)``; the floor absorbs entries that are ~0 on both sides."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(loss_fn: Callable[[], torch.Tensor], params: Mapping[str, torch.Tensor],
               eps: float = 1e-5, analytic: Mapping[str, torch.Tensor] | None = None,
               floor: float = 1e-6) -> GradCheckResult:
    """Compare autograd (or supplied) gradients with central finite differences.

    ``loss_fn`` must be deterministic (dropout off) and read ``params`` in place.
    """
    for name, p in params.items():
        if p.dtype != torch.float64:
            raise TypeError(f"grad_check needs float64 parameters ({name} is {p.dtype})")
    if analytic is None:
        for p in params.values():
            p.grad = None
        loss = loss_fn()
        names = list(params)
        grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
        analytic = {
            n: (torch.zeros_like(params[n]) if g is None else g) for n, g in zip(names, grads)
        }
    per_param = {}
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            numeric = np.empty(flat.numel())
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                numeric[i] = (up - down) / (2 * eps)
            a = analytic[name].detach().reshape(-1).cpu().numpy()
            per_param[name] = float(relative_error(a, numeric, floor).max()) if a.size else 0.0
    return GradCheckResult(max(per_param.values(), default=0.0), per_param)


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(path, tensors: Mapping[str, torch.Tensor], meta: dict) -> None:
    """Write named tensors plus a JSON metadata block into an ``.npz`` container."""
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in tensors.items()}
    header = {"format": "ecpe-checkpoint", "version": CHECKPOINT_VERSION, "meta": meta}
    arrays["__meta__"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[dict, dict]:
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data.files:
            raise ValueError(f"{path}: not an ecpe checkpoint")
        header = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if header.get("format") != "ecpe-checkpoint":
            raise ValueError(f"{path}: not an ecpe checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        tensors = {
            k[len("param/"):]: torch.from_numpy(data[k].copy())
            for k in data.files if k.startswith("param/")
        }
    return tensors, header["meta"]

