"""Action recognition over state pairs and the step-level training loss.

No trace carries action labels. A softmax read-out over the concatenated
(current, next) state beliefs proposes a distribution over ground actions;
the per-action model losses are averaged under it, and a cross-entropy term
pulls the distribution toward whichever action currently explains the step
best (or toward a repaired label once one exists).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import model as pm
from .strips.ground import GroundIndex


class ActionPredictor:
    """Linear softmax classifier from (ps_t, ps_next) to ground actions.

    Weights are (2*|P_I|, |A_I|) so a batch scores as one matmul.
    """

    def __init__(self, idx: GroundIndex, rng: np.random.Generator | None = None, scale: float = 0.1):
        self.idx = idx
        n_in, n_out = 2 * idx.n_props, idx.n_acts
        w = np.zeros((n_in, n_out)) if rng is None else rng.normal(0.0, scale, (n_in, n_out))
        self.params: dict[str, np.ndarray] = {"act/w": w, "act/b": np.zeros(n_out)}

    def leaves(self) -> dict[str, ad.Var]:
        return {k: ad.var(v) for k, v in self.params.items()}

    def forward(self, ps_pair, leaves: dict[str, ad.Var]) -> ad.Var:
        """Action distribution for a (..., 2*|P_I|) concatenated state pair."""
        x = ps_pair if isinstance(ps_pair, ad.Var) else ad.const(ps_pair)
        logits = ad.matmul(x, leaves["act/w"]) + leaves["act/b"]
        return ad.softmax(logits, axis=-1)

    def predict(self, ps_t: np.ndarray, ps_next: np.ndarray) -> np.ndarray:
        pair = np.concatenate([ps_t, ps_next], axis=-1)
        return self.forward(pair, self.leaves()).value


def expected_model_loss(pr_a: ad.Var, losses_a: ad.Var) -> ad.Var:
    """Average the per-action losses under the predicted distribution.

    Both inputs share a trailing action axis; the result drops it.
    """
    return ad.vsum(pr_a * losses_a, axis=-1)


def _clamped(ps: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(ps, delta, 1.0 - delta)


def log_pr_pred(ps_t: np.ndarray, ps_next: np.ndarray, add_g: np.ndarray,
                del_g: np.ndarray, delta: float = 1e-3) -> np.ndarray:
    """Log-likelihood of the observed next state under each action.

    Treats every proposition as an independent Bernoulli: the inferred
    belief scores the observed one. Shapes (B, P) against (A, P) give (B, A).
    """
    ps_hat = ps_t[:, None, :] * (1.0 - del_g) + (1.0 - ps_t[:, None, :]) * add_g
    ps_hat = _clamped(ps_hat, delta)
    nxt = ps_next[:, None, :]
    return np.sum(np.log(ps_hat * nxt + (1.0 - ps_hat) * (1.0 - nxt)), axis=-1)


def log_pr_app(ps_t: np.ndarray, pre_g: np.ndarray, delta: float = 1e-3) -> np.ndarray:
    """Log-probability that each action's preconditions all hold in ps_t."""
    held = 1.0 - pre_g * (1.0 - ps_t[:, None, :])
    return np.sum(np.log(_clamped(held, delta)), axis=-1)


def locally_best_action(ps_t: np.ndarray, ps_next: np.ndarray, pre_g: np.ndarray,
                        add_g: np.ndarray, del_g: np.ndarray,
                        delta: float = 1e-3) -> np.ndarray:
    """Index of the action scoring highest on fit + applicability, per row.

    Ties break toward the lowest index (argmax already does).
    """
    score = log_pr_pred(ps_t, ps_next, add_g, del_g, delta) + log_pr_app(ps_t, pre_g, delta)
    return np.argmax(score, axis=-1)


def action_ce(pr_a: ad.Var, targets: np.ndarray, floor: float = 1e-12,
              weights: np.ndarray | None = None) -> ad.Var:
    """Cross-entropy of the predicted action distribution against indices.

    Optional per-sample weights scale each term but not the denominator, so
    down-weighted samples genuinely contribute less.
    """
    b, a = pr_a.value.shape
    flat = ad.reshape(ad.log(ad.clip(pr_a, floor, 1.0)), (-1,))
    picked = ad.gather(flat, np.arange(b) * a + np.asarray(targets, dtype=np.intp))
    if weights is not None:
        picked = picked * ad.const(np.asarray(weights, dtype=np.float64))
    return -ad.vmean(picked)


def step_losses(ps_t, ps_next, pre_g, add_g, del_g, lam: float,
                w_pred: np.ndarray | None = None,
                w_app: np.ndarray | None = None) -> ad.Var:
    """Per-(sample, action) model losses for a batch, shape (B, A).

    ps_t/ps_next are (B, P), the grounded model matrices (A, P). Optional
    per-sample weights scale the prediction and applicability terms (used to
    emphasize trace endpoints, where the state is known rather than guessed).
    """
    st = ps_t if isinstance(ps_t, ad.Var) else ad.const(np.asarray(ps_t))
    sn = ps_next if isinstance(ps_next, ad.Var) else ad.const(np.asarray(ps_next))
    b, p = st.value.shape
    st = ad.reshape(st, (b, 1, p))
    sn = ad.reshape(sn, (b, 1, p))
    pred = pm.loss_pred(st, sn, add_g, del_g)
    app = pm.loss_app(st, pre_g)
    bias = pm.loss_bias(pre_g)
    if w_pred is not None:
        pred = pred * ad.const(np.asarray(w_pred)[:, None])
    if w_app is not None:
        app = app * ad.const(np.asarray(w_app)[:, None])
    return pred + app + lam * bias
