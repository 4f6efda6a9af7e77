"""Per-layer Wasserstein critics trained with a gradient penalty.

Each style layer gets an independent scalar-output MLP (3 hidden layers of
width 256, ReLU). Its value gap mean c(real) - mean c(fake) estimates the
Wasserstein-1 distance between the two feature distributions; the gradient
penalty keeps the critic approximately 1-Lipschitz. Feature matrices are
N x batch (columns are samples), matching the rest of the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .distances import DimensionError

HIDDEN_WIDTH = 256
N_HIDDEN = 3


class CriticNumericalError(RuntimeError):
    """A critic update produced a non-finite loss or parameters."""


@dataclass
class CriticConfig:
    lambda_gp: float = 10.0
    critic_lr: float = 5e-4
    batch_size: int = 1024
    n_critic: int = 1

    def validate(self) -> None:
        if self.lambda_gp < 0:
            raise ValueError("lambda_gp must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")


def _init_linear(layer: nn.Linear, gen: torch.Generator) -> None:
    bound = 1.0 / (layer.in_features ** 0.5)
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=gen)
        layer.bias.uniform_(-bound, bound, generator=gen)


class CriticState:
    """One layer's critic MLP plus its optimizer state and rng stream."""

    def __init__(self, in_dim: int, layer_name: str, lr: float = 5e-4, seed: int = 0):
        self.in_dim = in_dim
        self.layer_name = layer_name
        self.seed = seed
        self.generator = torch.Generator().manual_seed(seed)
        dims = [in_dim] + [HIDDEN_WIDTH] * N_HIDDEN
        layers: list[nn.Module] = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            layers += [nn.Linear(d_in, d_out), nn.ReLU()]
        layers.append(nn.Linear(dims[-1], 1))
        self.net = nn.Sequential(*layers)
        for m in self.net:
            if isinstance(m, nn.Linear):
                _init_linear(m, self.generator)
        self.optimizer = torch.optim.Adam(self.net.parameters(), lr=lr)
        self.step_count = 0

    def __call__(self, batch: torch.Tensor) -> torch.Tensor:
        """Score a batch given as columns of an in_dim x b matrix."""
        if batch.shape[0] != self.in_dim:
            raise DimensionError(
                f"critic for {self.layer_name} expects {self.in_dim}-dim features, "
                f"got {batch.shape[0]}"
            )
        return self.net(batch.T).squeeze(-1)


def squash_features(F: torch.Tensor) -> torch.Tensor:
    """Elementwise tanh; bounds critic inputs to (-1, 1)."""
    return torch.tanh(F)


def sample_feature_batch(F: torch.Tensor, batch_size: int, gen: torch.Generator) -> torch.Tensor:
    """Uniform with-replacement sample of `batch_size` columns."""
    if F.ndim != 2 or F.shape[1] < 1:
        raise ValueError("feature matrix must be 2-D and nonempty")
    idx = torch.randint(F.shape[1], (batch_size,), generator=gen)
    return F[:, idx]


def critic_value_gap(critic: CriticState, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """mean c(real) - mean c(fake): the critic's current Wasserstein estimate."""
    return critic(real).mean() - critic(fake).mean()


def gradient_penalty(
    critic: CriticState, real: torch.Tensor, fake: torch.Tensor, gen: torch.Generator
) -> torch.Tensor:
    """Mean (||grad c(x_hat)||_2 - 1)^2 at random interpolates of paired columns."""
    if real.shape != fake.shape:
        raise DimensionError(
            f"shape mismatch: {tuple(real.shape)} vs {tuple(fake.shape)}"
        )
    u = torch.rand(1, real.shape[1], generator=gen, dtype=real.dtype)
    interp = (u * real + (1.0 - u) * fake).detach().requires_grad_(True)
    scores = critic(interp)
    grads, = torch.autograd.grad(
        scores, interp, grad_outputs=torch.ones_like(scores), create_graph=True
    )
    norms = grads.norm(2, dim=0)
    return ((norms - 1.0) ** 2).mean()


def critic_update(
    state: CriticState, cfg: CriticConfig, real: torch.Tensor, fake: torch.Tensor
) -> dict[str, float]:
    """One Adam step on the WGAN-GP critic loss; returns the loss record.

    Gradients never reach the image: the fake batch is detached here.
    """
    real = real.detach()
    fake = fake.detach()
    state.optimizer.zero_grad(set_to_none=True)
    gap = critic_value_gap(state, real, fake)
    penalty = gradient_penalty(state, real, fake, state.generator)
    loss = -gap + cfg.lambda_gp * penalty
    if not torch.isfinite(loss):
        raise CriticNumericalError(
            f"non-finite critic loss for {state.layer_name} at update {state.step_count}"
        )
    loss.backward()
    state.optimizer.step()
    state.step_count += 1
    for p in state.net.parameters():
        if not torch.isfinite(p).all():
            raise CriticNumericalError(
                f"non-finite critic parameters for {state.layer_name} "
                f"at update {state.step_count}"
            )
    return {
        "gap": float(gap.detach()),
        "penalty": float(penalty.detach()),
        "total": float(loss.detach()),
    }
