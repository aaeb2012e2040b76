"""Gradient-check suite: every registered op plus the composed phase-1 loss
on a toy model, verified against central finite differences.

Each case builds a seeded random instance, reduces the op output to a
scalar, and compares analytic to numeric gradients. The suite powers the
``gradcheck`` CLI subcommand and the acceptance gate.
"""

import numpy as np

from . import autodiff as ad
from . import model as mdl
from . import training as tr
from .autodiff import Tensor, grad_check
from .data import streams_from_positions
from .skeleton import chain_skeleton


def _params(rng, **shapes):
    return {name: Tensor(rng.normal(size=shape) * 0.5, requires_grad=True)
            for name, shape in shapes.items()}


def toy_hyper():
    """Tiny architecture used by the composite check: tau=H=3, J=3, d_h=8."""
    return mdl.Hyper(
        joints=3,
        dims=3,
        hidden=8,
        latent=4,
        categories=3,
        heads=2,
        spl_hidden=6,
        disc_hidden=8,
        parents=chain_skeleton(3).parents,
    )


def _op_cases(seed):
    rng = np.random.default_rng([seed, 31])
    cases = []

    p = _params(rng, a=(3, 4), b=(4, 2))
    cases.append(("matmul", p, lambda q: ad.mean(ad.square(q["a"] @ q["b"]))))

    p = _params(rng, a=(3, 4), b=(4,))
    cases.append((
        "add_mul_sub_broadcast",
        p,
        lambda q: ad.mean(ad.square((q["a"] + q["b"]) * q["a"] - q["b"])),
    ))

    p = _params(rng, x=(2, 5))
    cases.append(("sigmoid", p, lambda q: ad.mean(ad.square(ad.sigmoid(q["x"])))))
    cases.append(("tanh", p, lambda q: ad.mean(ad.square(ad.tanh(q["x"])))))
    cases.append(("exp_log", p, lambda q: ad.mean(ad.log(ad.exp(q["x"]) + 2.0))))
    cases.append(("square", p, lambda q: ad.mean(ad.square(q["x"]))))
    cases.append(("softmax", p, lambda q: ad.mean(ad.square(ad.softmax(q["x"], axis=1)))))
    cases.append((
        "concat_narrow",
        p,
        lambda q: ad.mean(ad.square(ad.concat([q["x"], q["x"] * 2.0], axis=1)[:, 3:8])),
    ))
    cases.append((
        "sum_axis",
        p,
        lambda q: ad.mean(ad.square(q["x"].sum(axis=1, keepdims=True) * q["x"])),
    ))

    return cases


def _model_cases(seed):
    hyper = toy_hyper()
    rng = np.random.default_rng([seed, 32])
    full = mdl.ModelParams.init(hyper, seed=seed)
    n = hyper.n_pose
    cases = []

    x = rng.normal(size=(2, n))
    h0 = rng.normal(size=(2, hyper.hidden)) * 0.3

    def with_params(names, builder):
        subset = {name: full[name] for name in names}

        def build(probe):
            merged = dict(full.as_dict())
            merged.update(probe)
            return builder(mdl.ModelParams(hyper, merged))

        return subset, build

    gru_names = [f"encoder.gru_pos.{k}" for k in
                 ("Wr", "Ur", "br", "Wu", "Uu", "bu", "Wn", "Un", "bn")]
    subset, build = with_params(
        gru_names,
        lambda p: ad.mean(ad.square(mdl.gru_step(Tensor(h0), Tensor(x), p, "encoder.gru_pos"))),
    )
    cases.append(("gru_step", subset, build))

    att_names = [name for name in full.names("encoder") if ".att." in name]
    toks = [rng.normal(size=(2, hyper.hidden)) * 0.4 for _ in range(3)]
    subset, build = with_params(
        att_names,
        lambda p: ad.mean(
            ad.square(mdl.attention_fuse(Tensor(toks[0]), Tensor(toks[1]), Tensor(toks[2]), p))
        ),
    )
    cases.append(("attention_fuse", subset, build))

    spl_names = [name for name in full.names("decoder") if ".spl." in name]
    hd = rng.normal(size=(2, hyper.hidden)) * 0.4
    subset, build = with_params(
        spl_names, lambda p: ad.mean(ad.square(mdl.spl_forward(Tensor(hd), p)))
    )
    cases.append(("spl_forward", subset, build))

    obs = rng.normal(size=(2, 3, n)) * 0.5

    def encode_loss(p):
        _, latent = mdl.encode(streams_from_positions(obs), p)
        return ad.mean(ad.square(latent.z)) + ad.mean(ad.square(latent.c))

    enc_names = full.names("encoder") + full.names("latent")
    subset, build = with_params(enc_names, encode_loss)
    cases.append(("encode", subset, build))

    z = rng.normal(size=(2, hyper.latent)) * 0.5
    c_logits = rng.normal(size=(2, hyper.categories))
    c = np.exp(c_logits) / np.exp(c_logits).sum(axis=1, keepdims=True)
    s_prev = rng.normal(size=(2, n)) * 0.5

    def decode_loss(p):
        latent = mdl.LatentState(z=Tensor(z), c=Tensor(c))
        s_next, h_dec = mdl.decode_step(Tensor(s_prev), Tensor(hd), latent, p)
        return ad.mean(ad.square(s_next)) + ad.mean(ad.square(h_dec))

    subset, build = with_params(full.names("decoder"), decode_loss)
    cases.append(("decode_step", subset, build))

    disc_names = full.names("discriminators")
    fake_z = rng.normal(size=(3, hyper.latent))
    fake_c = np.exp(rng.normal(size=(3, hyper.categories)))
    fake_c /= fake_c.sum(axis=1, keepdims=True)
    prior_z, prior_c = tr.sample_priors(3, hyper.latent, hyper.categories, rng)
    subset, build = with_params(
        disc_names,
        lambda p: tr.disc_loss(p, "dz", Tensor(prior_z), Tensor(fake_z))
        + tr.disc_loss(p, "dc", Tensor(prior_c), Tensor(fake_c)),
    )
    cases.append(("disc_loss", subset, build))

    return cases


def composite_case(seed, batch=1, tau=3, horizon=3):
    """The full phase-1 objective on the toy model, detach-free."""
    hyper = toy_hyper()
    rng = np.random.default_rng([seed, 33])
    full = mdl.ModelParams.init(hyper, seed=seed)
    obs = rng.normal(size=(batch, tau, hyper.n_pose)) * 0.5
    tgt = rng.normal(size=(batch, horizon, hyper.n_pose)) * 0.5
    z_prior, c_prior = tr.sample_priors(batch, hyper.latent, hyper.categories, rng)

    def build(probe):
        merged = dict(full.as_dict())
        merged.update(probe)
        return tr.phase1_composite_loss(
            mdl.ModelParams(hyper, merged), obs, tgt, z_prior, c_prior, adv_weight=1e-2
        )

    return full.as_dict(), build


def run_suite(eps=1e-5, tol=1e-4, seed=0, include_composite=True):
    """Run every check; returns a list of (name, GradCheckReport)."""
    results = []
    for name, params, build in _op_cases(seed) + _model_cases(seed):
        results.append((name, grad_check(build, params, eps=eps, tol=tol)))
    if include_composite:
        params, build = composite_case(seed)
        results.append(("phase1_composite", grad_check(build, params, eps=eps, tol=tol)))
    return results


def format_suite(results):
    lines = []
    for name, report in results:
        status = "ok " if report.passed else "FAIL"
        lines.append(
            f"[{status}] {name:24s} max rel err {report.max_rel_error:.3e}"
            + ("" if report.passed else f"  worst block: {report.worst_block}")
        )
    return "\n".join(lines)
