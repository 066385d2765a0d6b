"""Alternating adversarial training: losses, step logic, the fit loop with
checkpointing and periodic sample triptychs, and evaluation.

Each step updates the discriminator first on (real, generated) pairs, then
the generator on adversarial + weighted-L1 terms, on fresh tapes. Within a
step both generator forwards share one dropout stream keyed by the step
number, so the fake the discriminator judged is the same image the
generator is optimized on. Parameter isolation: the generator-phase tape
also deposits gradients into discriminator parameters; those are discarded
at the end of the step so the next discriminator update starts clean.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels, ops
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, TrainConfig
from .discriminator import DiscriminatorSpec, build_discriminator, discriminator_forward
from .generator import GeneratorSpec, build_generator, generator_forward
from .imgio import ImagePair, encode_png, make_triptych
from .losses import gan_bce, l1_loss
from .optim import AdamConfig, AdamState, TrainingDiverged, adam_step
from .pipeline import Dataset, denormalize
from .rng import Rng
from .tape import Tape, backward
from .tensor import ParamStore, Tensor4

LOSS_CSV_HEADER = ["step", "disc_loss", "gen_total", "gen_gan", "gen_l1", "wall_ms"]
PSNR_CAP_DB = 99.0


@dataclass
class StepReport:
    gen_total: float
    gen_gan: float
    gen_l1: float
    disc_loss: float

    def finite(self) -> bool:
        return all(np.isfinite(v) for v in
                   (self.gen_total, self.gen_gan, self.gen_l1, self.disc_loss))


@dataclass
class TrainerState:
    """Everything that changes during a run."""

    gen_spec: GeneratorSpec
    disc_spec: DiscriminatorSpec
    gen: ParamStore
    disc: ParamStore
    adam_gen: AdamState
    adam_disc: AdamState
    step: int = 0

    @classmethod
    def fresh(cls, gen_spec: GeneratorSpec, disc_spec: DiscriminatorSpec,
              rng: Rng) -> "TrainerState":
        gen = build_generator(gen_spec, rng)
        disc = build_discriminator(disc_spec, rng)
        return cls(gen_spec, disc_spec, gen, disc,
                   AdamState.for_store(gen), AdamState.for_store(disc))


def train_step(state: TrainerState, adam_cfg: AdamConfig, pair: ImagePair,
               lambda_l1: float, rng: Rng) -> StepReport:
    """One alternating update; ``pair`` must already be normalized."""
    x, y = pair.input_map, pair.target_truth
    step = state.step

    # Discriminator phase: generated image treated as a constant.
    fake = generator_forward(state.gen_spec, state.gen, x, training=True,
                             dropout_rng=rng.stream("dropout", step))
    tape_d = Tape()
    real_logits = discriminator_forward(state.disc_spec, state.disc, x, y, tape_d)
    fake_logits = discriminator_forward(state.disc_spec, state.disc, x, fake, tape_d)
    disc_loss = ops.add(gan_bce(real_logits, True, tape_d),
                        gan_bce(fake_logits, False, tape_d), tape_d)
    backward(tape_d, disc_loss)
    adam_step(state.disc, state.adam_disc, adam_cfg)
    tape_d.clear()

    # Generator phase: fresh tape, same dropout stream, updated disc.
    tape_g = Tape()
    gen_out = generator_forward(state.gen_spec, state.gen, x, training=True,
                                dropout_rng=rng.stream("dropout", step), tape=tape_g)
    gen_logits = discriminator_forward(state.disc_spec, state.disc, x, gen_out, tape_g)
    gan_term = gan_bce(gen_logits, True, tape_g)
    l1_term = l1_loss(y, gen_out, tape_g)
    gen_total = ops.add(gan_term, ops.scale(l1_term, lambda_l1, tape_g), tape_g)
    backward(tape_g, gen_total)
    adam_step(state.gen, state.adam_gen, adam_cfg)
    # The generator tape ran through the discriminator; drop those grads.
    state.disc.zero_grads()
    tape_g.clear()

    state.step += 1
    report = StepReport(gen_total=gen_total.item(), gen_gan=gan_term.item(),
                        gen_l1=l1_term.item(), disc_loss=disc_loss.item())
    if not report.finite():
        raise TrainingDiverged(f"non-finite loss at step {state.step}: {report}")
    return report


def _checkpoint_tensors(state: TrainerState) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for prefix, store, adam in (("gen", state.gen, state.adam_gen),
                                ("disc", state.disc, state.adam_disc)):
        for name, p in store.items():
            tensors[f"p/{name}"] = p.data
        for name in store.names():
            tensors[f"m/{name}"] = adam.m[name]
            tensors[f"v/{name}"] = adam.v[name]
        tensors[f"t/{prefix}"] = np.full((1, 1, 1, 1), float(adam.t), dtype=np.float32)
    return tensors


def save_state(path, state: TrainerState, seed: int) -> None:
    save_checkpoint(path, state.step, seed, _checkpoint_tensors(state))


def load_state(path, gen_spec: GeneratorSpec | None = None,
               disc_spec: DiscriminatorSpec | None = None) -> tuple[TrainerState, int]:
    """Rebuild a TrainerState from a checkpoint; returns (state, seed)."""
    ck = load_checkpoint(path)
    gen = ParamStore()
    disc = ParamStore()
    for name, arr in ck.tensors.items():
        if not name.startswith("p/"):
            continue
        store = gen if name.startswith("p/gen/") else disc
        store.add(name[2:], Tensor4(arr))
    gen_spec = gen_spec or GeneratorSpec.from_store(gen)
    disc_spec = disc_spec or DiscriminatorSpec.from_store(disc)
    adam_gen = AdamState.for_store(gen)
    adam_disc = AdamState.for_store(disc)
    for store, adam, prefix in ((gen, adam_gen, "gen"), (disc, adam_disc, "disc")):
        for name in store.names():
            adam.m[name] = ck.tensors[f"m/{name}"]
            adam.v[name] = ck.tensors[f"v/{name}"]
        adam.t = int(ck.tensors[f"t/{prefix}"].reshape(()))
    state = TrainerState(gen_spec, disc_spec, gen, disc, adam_gen, adam_disc,
                         step=ck.step)
    return state, ck.seed


def generate_image(spec: GeneratorSpec, store: ParamStore, x: Tensor4) -> Tensor4:
    """Inference helper: dropout off, no tape."""
    return generator_forward(spec, store, x, training=False)


def write_sample(path, state: TrainerState, pair: ImagePair) -> None:
    generated = generate_image(state.gen_spec, state.gen, pair.input_map)
    encode_png(make_triptych(pair.input_map, pair.target_truth, generated), path)


def fit(cfg: RunConfig, dataset: Dataset, out_dir, val_pair: ImagePair | None = None,
        resume_from=None, log=None) -> Path:
    """Run the training loop; returns the final checkpoint path.

    Layout under ``out_dir``: ``loss.csv`` (one row per step),
    ``samples/step_NNNNNN.png`` preview triptychs, and
    ``checkpoints/step_NNNNNN.ckpt``. With ``resume_from`` the loop
    continues from the stored step; because every random stream is keyed
    by step, the result is bit-identical to an uninterrupted run.
    """
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    tc: TrainConfig = cfg.train
    rng = Rng(tc.seed)

    if resume_from is not None:
        state, _ = load_state(resume_from, cfg.generator_spec, cfg.discriminator_spec)
    else:
        state = TrainerState.fresh(cfg.generator_spec, cfg.discriminator_spec, rng)

    if val_pair is None:
        val_pair = dataset.eval_sample(0, cfg.jitter_spec.crop_to, cfg.resize_method)

    loss_path = out / "loss.csv"
    start_step = state.step
    mode = "a" if (resume_from is not None and loss_path.exists()) else "w"
    with open(loss_path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(LOSS_CSV_HEADER)
            fh.flush()
        try:
            while state.step < tc.steps:
                t0 = time.monotonic()
                pair = dataset.training_sample(rng, cfg.jitter_spec, state.step)
                report = train_step(state, tc.adam, pair, tc.lambda_l1, rng)
                wall_ms = int((time.monotonic() - t0) * 1000)
                writer.writerow([
                    state.step,
                    f"{report.disc_loss:.9g}", f"{report.gen_total:.9g}",
                    f"{report.gen_gan:.9g}", f"{report.gen_l1:.9g}", wall_ms,
                ])
                fh.flush()
                if log is not None and (state.step % 50 == 0 or state.step == tc.steps):
                    log(f"step {state.step}/{tc.steps} "
                        f"d={report.disc_loss:.4f} g={report.gen_total:.4f} "
                        f"l1={report.gen_l1:.4f}")
                if tc.sample_every and state.step % tc.sample_every == 0:
                    write_sample(out / "samples" / f"step_{state.step:06d}.png",
                                 state, val_pair)
                if tc.checkpoint_every and state.step % tc.checkpoint_every == 0:
                    ckpt_path = out / "checkpoints" / f"step_{state.step:06d}.ckpt"
                    save_state(ckpt_path, state, tc.seed)
        finally:
            fh.flush()

    final_path = out / "checkpoints" / f"step_{state.step:06d}.ckpt"
    if state.step == start_step or not final_path.exists():
        save_state(final_path, state, tc.seed)
    return final_path


def psnr_db(mse_pixel: float) -> float:
    """PSNR against MAX=255, capped at 99 dB for exact matches."""
    if mse_pixel <= 0:
        return PSNR_CAP_DB
    value = 10.0 * np.log10(255.0 ** 2 / mse_pixel)
    return float(min(value, PSNR_CAP_DB))


def evaluate(generate_fn, pairs) -> dict:
    """Mean L1 (in [-1, 1] space) and PSNR (in pixel space) over a dataset.

    ``generate_fn`` maps a normalized input tensor to a normalized output;
    ``pairs`` is any iterable of normalized ImagePairs.
    """
    total_l1 = 0.0
    total_sq = 0.0
    total_elems = 0
    count = 0
    for pair in pairs:
        out = generate_fn(pair.input_map)
        diff = out.data.astype(np.float64) - pair.target_truth.data.astype(np.float64)
        total_l1 += np.abs(diff).sum()
        pix_diff = (denormalize(out).data.astype(np.float64)
                    - denormalize(pair.target_truth).data.astype(np.float64))
        total_sq += (pix_diff ** 2).sum()
        total_elems += diff.size
        count += 1
    if count == 0:
        raise ValueError("evaluate: empty dataset")
    mean_l1 = total_l1 / total_elems
    return {
        "mean_l1": float(mean_l1),
        "psnr_db": psnr_db(total_sq / total_elems),
        "pairs": count,
    }
