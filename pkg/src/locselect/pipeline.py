"""Experiment orchestration: simulate, two-stage training, SNR-grid evaluation.

Every artifact under the run directory is a pure function of (config, seed):
manifests and CSVs are written with canonical value formatting, checkpoints
carry no timestamps, and anything time-stamped goes only to the ``run.log``
sidecar. Metric summaries are recomputable from the persisted per-frame
traces.
"""

from __future__ import annotations

import json
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import coding
from .acoustics import peak_normalize, mix_at_snr, render, sample_scene
from .baselines import estimate_doa_gcc, lag_quantization_bound_deg
from .config import ExperimentConfig
from .doanet import DoaClip, infer, train_doanet
from .dsp import Waveform, magnitude, read_wav, stft, write_wav
from .masknet import MaskSample, irm_target, train_masknet
from .numerics import AdamState, ParamStore, derive_seed, load_arrays, save_arrays
from .speakers import build_corpus, synth_utterance


class PipelineError(RuntimeError):
    pass


STAGES = ("mask", "doa", "doa-unmasked")
_STAGE_FILES = {"mask": "mask", "doa": "doa", "doa-unmasked": "doa_unmasked"}
VARIANTS = ("locselect", "unmasked")


# -- small utilities ----------------------------------------------------------


def _fmt(x) -> str:
    """Canonical (round-trip exact) text for a float."""
    return repr(float(x))


def _log(config: ExperimentConfig, message: str) -> None:
    """Timestamped sidecar log plus console echo."""
    path = config.out_path() / "run.log"
    path.parent.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    with open(path, "a") as fh:
        fh.write(f"[{stamp}] {message}\n")
    print(message, flush=True)


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_jsonl(path: Path, header: dict, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path: Path) -> tuple[dict, list[dict]]:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines:
        raise PipelineError(f"{path}: empty manifest")
    return lines[0], lines[1:]


# -- simulate ------------------------------------------------------------------


def _utterance_pools(manifest, test_per_speaker: int):
    train_pool, test_pool = {}, {}
    for model in manifest.speakers:
        utts = manifest.by_speaker(model.speaker_id)
        n_train = len(utts) - test_per_speaker
        # each clip draws an in-mixture utterance plus a distinct reference
        if n_train < 2 or test_per_speaker < 2:
            raise PipelineError(
                "both utterance pools need >= 2 clips per speaker "
                f"(got {n_train} train / {test_per_speaker} test)"
            )
        train_pool[model.speaker_id] = utts[:n_train]
        test_pool[model.speaker_id] = utts[n_train:]
    return train_pool, test_pool


def _maybe_add_noise(mixture: np.ndarray, noise_floor_db: float | None,
                     seed: int) -> np.ndarray:
    if noise_floor_db is None:
        return mixture
    rng = np.random.default_rng(np.random.PCG64(derive_seed(seed, "ambient")))
    rms = float(np.sqrt(np.mean(mixture**2)))
    noisy = mixture + rng.normal(size=mixture.shape) * rms * 10 ** (noise_floor_db / 20)
    return peak_normalize(noisy)[0]


def _render_clip(config: ExperimentConfig, clip_id: str, split: str, scene,
                 utt_waves: dict, plan: dict, clips_dir: Path) -> dict:
    fs = config.sample_rate
    target_wave = utt_waves[plan["target_utt"]]
    tgt = render(target_wave, scene.rir_pair(scene.target_pos, fs)).samples
    record = {
        "clip_id": clip_id,
        "split": split,
        "scene_seed": scene.seed,
        "snr_db": scene.snr_db,
        "room": list(scene.room.dimensions),
        "beta": scene.room.beta,
        "max_order": scene.room.max_order,
        "mic1": scene.array.mic1.tolist(),
        "mic2": scene.array.mic2.tolist(),
        "target_pos": scene.target_pos.tolist(),
        "theta_deg": scene.theta_t,
        "theta_class": coding.to_class(scene.theta_t),
        "target_speaker": plan["target_speaker"],
        "target_utt": plan["target_utt"],
    }
    paths = {"mixture": f"clips/{clip_id}_mix.wav"}
    if scene.interferer_positions:
        interf_wave = utt_waves[plan["interferer_utt"]]
        itf = render(interf_wave, scene.rir_pair(scene.interferer_positions[0], fs)).samples
        mix = mix_at_snr(tgt, itf, scene.snr_db)
        mixture = _maybe_add_noise(mix.mixture, config.scene.noise_floor_db, scene.seed)
        paths.update(target=f"clips/{clip_id}_tgt.wav", interf=f"clips/{clip_id}_int.wav",
                     reference=f"clips/{clip_id}_ref.wav")
        write_wav(clips_dir / f"{clip_id}_tgt.wav", Waveform(mix.target_scaled, fs))
        write_wav(clips_dir / f"{clip_id}_int.wav", Waveform(mix.interf_scaled, fs))
        write_wav(clips_dir / f"{clip_id}_ref.wav", utt_waves[plan["reference_utt"]])
        record.update(
            interferer_pos=[p.tolist() for p in scene.interferer_positions],
            interferer_theta_deg=scene.interferer_doas()[0],
            interferer_speaker=plan["interferer_speaker"],
            interferer_utt=plan["interferer_utt"],
            reference_utt=plan["reference_utt"],
            alpha=mix.alpha,
            norm_gain=mix.gain,
        )
    else:
        mixture, gain = peak_normalize(tgt)
        mixture = _maybe_add_noise(mixture, config.scene.noise_floor_db, scene.seed)
        record.update(interferer_pos=[], alpha=None, norm_gain=gain)
    write_wav(clips_dir / f"{clip_id}_mix.wav", Waveform(mixture, fs))
    record["wav"] = paths
    return record


def cmd_simulate(config: ExperimentConfig) -> Path:
    """Build the corpus and render train/test/audit splits at all grid SNRs."""
    out = config.out_path()
    fs = config.sample_rate
    _log(config, f"simulate: corpus of {config.corpus.n_speakers} speakers -> {out}")

    corpus_cfg = config.corpus.to_corpus_config(fs)
    manifest = build_corpus(corpus_cfg, derive_seed(config.seed, "corpus"))
    corpus_dir = out / "corpus"
    models = {m.speaker_id: m for m in manifest.speakers}
    utt_waves: dict[str, Waveform] = {}
    for utt in manifest.utterances:
        wave = synth_utterance(models[utt.speaker_id], utt.duration_s, utt.seed,
                               fs, corpus_cfg.noise_floor_db,
                               corpus_cfg.broadband_floor_db)
        utt_waves[utt.utt_id] = wave
        write_wav(corpus_dir / utt.wav_path, wave)
    speaker_records = [
        {"kind": "speaker", "speaker_id": m.speaker_id, "f0_range": list(m.f0_range),
         "formants": [list(f) for f in m.formants], "tilt_db_oct": m.tilt_db_oct,
         "seed": m.seed}
        for m in manifest.speakers
    ]
    utt_records = [
        {"kind": "utterance", "speaker_id": u.speaker_id, "utt_id": u.utt_id,
         "seed": u.seed, "duration_s": u.duration_s, "wav": u.wav_path}
        for u in manifest.utterances
    ]
    write_jsonl(corpus_dir / "manifest.jsonl",
                {"schema": "locselect/corpus", "version": 1,
                 "config_hash": config.config_hash()},
                speaker_records + utt_records)

    train_pool, test_pool = _utterance_pools(manifest, config.corpus.test_clips_per_speaker)
    speaker_ids = sorted(models)

    def simulate_split(split: str, pool: dict, clips_per_snr: int) -> None:
        rng = np.random.default_rng(np.random.PCG64(derive_seed(config.seed, f"plan-{split}")))
        sampler = config.scene.to_sampler()
        split_dir = out / "dataset" / split
        clips_dir = split_dir / "clips"
        clips_dir.mkdir(parents=True, exist_ok=True)
        records = []
        idx = 0
        for snr in config.snr_grid_db:
            for _ in range(clips_per_snr):
                clip_id = f"{split}_{idx:05d}"
                tgt_spk = speaker_ids[rng.integers(len(speaker_ids))]
                others = [s for s in speaker_ids if s != tgt_spk]
                int_spk = others[rng.integers(len(others))]
                tgt_utts = pool[tgt_spk]
                picks = rng.choice(len(tgt_utts), size=2, replace=False)
                plan = {
                    "target_speaker": tgt_spk,
                    "interferer_speaker": int_spk,
                    "target_utt": tgt_utts[picks[0]].utt_id,
                    "reference_utt": tgt_utts[picks[1]].utt_id,
                    "interferer_utt": pool[int_spk][rng.integers(len(pool[int_spk]))].utt_id,
                }
                scene = sample_scene(sampler, derive_seed(config.seed, f"scene-{clip_id}"), snr)
                records.append(_render_clip(config, clip_id, split, scene,
                                            utt_waves, plan, clips_dir))
                idx += 1
        write_jsonl(split_dir / "manifest.jsonl",
                    {"schema": "locselect/scenes", "version": 1, "split": split,
                     "config_hash": config.config_hash()},
                    records)
        _log(config, f"simulate: wrote {len(records)} {split} clips")

    simulate_split("train", train_pool, config.dataset.train_clips_per_snr)
    simulate_split("test", test_pool, config.dataset.test_clips_per_snr)

    # audit split: anechoic single-source scenes for the classical oracle
    audit_dir = out / "dataset" / "audit"
    clips_dir = audit_dir / "clips"
    clips_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.PCG64(derive_seed(config.seed, "plan-audit")))
    sampler = config.scene.to_sampler(anechoic=True, single_source=True)
    records = []
    for idx in range(config.dataset.audit_clips):
        clip_id = f"audit_{idx:05d}"
        tgt_spk = speaker_ids[rng.integers(len(speaker_ids))]
        utts = test_pool[tgt_spk]
        plan = {
            "target_speaker": tgt_spk,
            "target_utt": utts[rng.integers(len(utts))].utt_id,
        }
        scene = sample_scene(sampler, derive_seed(config.seed, f"scene-{clip_id}"), 0.0)
        records.append(_render_clip(config, clip_id, "audit", scene,
                                    utt_waves, plan, clips_dir))
    write_jsonl(audit_dir / "manifest.jsonl",
                {"schema": "locselect/scenes", "version": 1, "split": "audit",
                 "config_hash": config.config_hash()},
                records)
    _log(config, f"simulate: wrote {len(records)} audit clips")
    return out / "dataset"


# -- dataset loading -----------------------------------------------------------


def load_split_records(config: ExperimentConfig, split: str) -> list[dict]:
    path = config.out_path() / "dataset" / split / "manifest.jsonl"
    if not path.exists():
        raise PipelineError(f"dataset split {split!r} missing — run `simulate` first")
    header, records = read_jsonl(path)
    if header.get("config_hash") != config.config_hash():
        raise PipelineError(
            f"dataset at {path} was simulated with a different config "
            f"({header.get('config_hash')} != {config.config_hash()})"
        )
    return records


def _clip_wave(config: ExperimentConfig, split: str, record: dict, key: str) -> Waveform:
    rel = record["wav"].get(key) if key != "mixture" else record["wav"]["mixture"]
    if rel is None:
        raise PipelineError(f"clip {record['clip_id']} has no {key} wav")
    path = config.out_path() / "dataset" / split / rel
    return read_wav(path, expected_rate=config.sample_rate)


def _load_mask_samples(config: ExperimentConfig, split: str = "train") -> list[MaskSample]:
    win, hop = config.stft.win, config.stft.hop
    samples = []
    for record in load_split_records(config, split):
        if "target" not in record["wav"]:
            continue  # single-source clips carry no mask supervision
        mix = _clip_wave(config, split, record, "mixture")
        tgt = _clip_wave(config, split, record, "target")
        itf = _clip_wave(config, split, record, "interf")
        ref = _clip_wave(config, split, record, "reference")
        mix_mag = magnitude(stft(mix.channel(0), win, hop))
        samples.append(MaskSample(
            clip_id=record["clip_id"],
            mix_mag=mix_mag,
            ref_mag=magnitude(stft(ref.channel(0), win, hop)),
            irm=irm_target(magnitude(stft(Waveform(tgt.samples[0], config.sample_rate), win, hop)),
                           magnitude(stft(Waveform(itf.samples[0], config.sample_rate), win, hop))),
        ))
    if not samples:
        raise PipelineError(f"no two-speaker clips with components in split {split!r}")
    return samples


def _load_doa_clips(config: ExperimentConfig, split: str,
                    with_reference: bool) -> list[DoaClip]:
    clips = []
    for record in load_split_records(config, split):
        mixture = _clip_wave(config, split, record, "mixture")
        reference = None
        if with_reference and record["wav"].get("reference"):
            reference = _clip_wave(config, split, record, "reference").samples
        clips.append(DoaClip(
            clip_id=record["clip_id"],
            mixture=mixture.samples,
            reference=reference,
            theta_class=record["theta_class"],
            snr_db=record["snr_db"],
            sample_rate=config.sample_rate,
        ))
    return clips


# -- train ----------------------------------------------------------------------


def _checkpoint_paths(config: ExperimentConfig, stage: str) -> tuple[Path, Path]:
    name = _STAGE_FILES[stage]
    ckpt_dir = config.out_path() / "checkpoints"
    return ckpt_dir / f"{name}.ckpt", ckpt_dir / f"{name}_last.ckpt"


def _save_rolling(path: Path, params: ParamStore, adam: AdamState, epoch: int,
                  meta: dict, history: list[dict]) -> None:
    arrays = {f"param.{n}": t.data for n, t in params.items()}
    arrays.update({f"buffer.{n}": b for n, b in sorted(params._buffers.items())})
    arrays.update({f"adam.{k}": v for k, v in adam.arrays().items()})
    save_arrays(path, arrays, {**meta, "rng_seed": params.rng_seed,
                               "epochs_done": epoch + 1, "adam_hyper": adam.hyper(),
                               "history": history})


def _load_rolling(path: Path) -> tuple[ParamStore, AdamState, dict]:
    arrays, meta = load_arrays(path)
    store = ParamStore(int(meta.get("rng_seed", 0)))
    adam_arrays = {}
    for name in sorted(arrays):
        if name.startswith("param."):
            store.add_constant(name[len("param."):], arrays[name])
        elif name.startswith("buffer."):
            store.add_buffer(name[len("buffer."):], arrays[name])
        elif name.startswith("adam."):
            adam_arrays[name[len("adam."):]] = arrays[name]
    adam = AdamState.from_arrays(adam_arrays, meta["adam_hyper"])
    return store, adam, meta


def _write_history_csv(path: Path, history: list[dict], columns: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("#schema locselect/train-log v1\n")
        fh.write(",".join(columns) + "\n")
        for row in history:
            fh.write(",".join(str(row["epoch"]) if c == "epoch" else _fmt(row[c])
                              for c in columns) + "\n")


def cmd_train(config: ExperimentConfig, stage: str,
              stop_after_epoch: int | None = None) -> Path:
    """Run one training stage; resumes from the rolling checkpoint if present."""
    if stage not in STAGES:
        raise PipelineError(f"unknown training stage {stage!r}; expected one of {STAGES}")
    out = config.out_path()
    final_path, rolling_path = _checkpoint_paths(config, stage)
    config_hash = config.config_hash()

    if final_path.exists():
        _, meta = load_arrays(final_path)
        if meta.get("config_hash") == config_hash and meta.get("complete"):
            _log(config, f"train[{stage}]: checkpoint already complete at {final_path}")
            return final_path

    resume = None
    prev_history: list[dict] = []
    if rolling_path.exists():
        params, adam, meta = _load_rolling(rolling_path)
        if meta.get("config_hash") != config_hash:
            raise PipelineError(
                f"rolling checkpoint {rolling_path} belongs to config "
                f"{meta.get('config_hash')}, not {config_hash}; use a fresh out_dir"
            )
        resume = (params, adam, int(meta["epochs_done"]))
        prev_history = list(meta.get("history", []))
        _log(config, f"train[{stage}]: resuming at epoch {meta['epochs_done']}")

    mask_checkpoint = None
    if stage == "doa":
        mask_path, _ = _checkpoint_paths(config, "mask")
        if not mask_path.exists():
            raise PipelineError("mask checkpoint missing — run `train --stage mask` first")
        mask_checkpoint, mask_meta = ParamStore.load(mask_path)
        if mask_meta.get("config_hash") != config_hash:
            raise PipelineError("mask checkpoint was trained with a different config")

    meta = {"stage": stage, "config_hash": config_hash}
    history_columns = ["epoch", "train_loss", "val_loss" if stage == "mask" else "val_mae"]
    log_path = out / "logs" / f"{_STAGE_FILES[stage]}_train.csv"
    all_history = prev_history

    def on_epoch(epoch: int, params: ParamStore, adam: AdamState, row: dict) -> None:
        all_history.append(row)
        _save_rolling(rolling_path, params, adam, epoch, meta, all_history)
        _write_history_csv(log_path, all_history, history_columns)

    if stage == "mask":
        samples = _load_mask_samples(config)
        hyper = config.masknet.hyper(derive_seed(config.seed, "train-mask"))
        target_epochs = hyper.epochs if stop_after_epoch is None else min(hyper.epochs,
                                                                          stop_after_epoch)
        hyper = hyper.__class__(**{**hyper.__dict__, "epochs": target_epochs})
        net_cfg = config.masknet.net_config(config.n_freq)
        _log(config, f"train[mask]: {len(samples)} clips, {target_epochs} epochs")
        result = train_masknet(samples, hyper, net_cfg, resume=resume, epoch_callback=on_epoch)
        for row in result.history:
            _log(config, f"train[mask] epoch {row['epoch']}: train_loss={row['train_loss']:.5f} "
                         f"val_loss={row['val_loss']:.5f}")
        net_meta = net_cfg.to_dict()
    else:
        clips = _load_doa_clips(config, "train", with_reference=(stage == "doa"))
        hyper = config.doanet.hyper(derive_seed(config.seed, f"train-{stage}"))
        target_epochs = hyper.epochs if stop_after_epoch is None else min(hyper.epochs,
                                                                          stop_after_epoch)
        hyper = hyper.__class__(**{**hyper.__dict__, "epochs": target_epochs})
        net_cfg = config.doanet.net_config(config.n_freq, config.coding.sigma_theta_deg)
        _log(config, f"train[{stage}]: {len(clips)} clips, {target_epochs} epochs")
        result = train_doanet(
            clips, mask_checkpoint, hyper, net_cfg,
            win=config.stft.win, hop=config.stft.hop,
            resume=resume, epoch_callback=on_epoch,
            log=lambda msg: _log(config, f"train[{stage}] {msg}"),
        )
        net_meta = net_cfg.to_dict()

    if stop_after_epoch is not None and stop_after_epoch < (
            config.masknet.epochs if stage == "mask" else config.doanet.epochs):
        _log(config, f"train[{stage}]: stopped after epoch {stop_after_epoch} (resumable)")
        return rolling_path

    result.params.save(final_path, meta={**meta, "net_config": net_meta, "complete": True})
    _write_history_csv(log_path, all_history, history_columns)
    _log(config, f"train[{stage}]: wrote {final_path}")
    return final_path


# -- eval ------------------------------------------------------------------------


@dataclass
class FrameRows:
    rows: list[tuple]  # (clip_id, snr_db, frame, theta_gt, theta_est, abs_err)
    clip_rows: list[tuple]  # (clip_id, snr_db, theta_gt, clip_doa, abs_err)


def _write_trace_csv(path: Path, rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("#schema locselect/trace v1\n")
        fh.write("clip_id,snr_db,frame,theta_gt,theta_est,abs_err\n")
        for clip_id, snr, frame, gt, est, err in rows:
            fh.write(f"{clip_id},{_fmt(snr)},{frame},{gt},{est},{_fmt(err)}\n")


def _write_clip_csv(path: Path, rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("#schema locselect/clips v1\n")
        fh.write("clip_id,snr_db,theta_gt,clip_doa,abs_err\n")
        for clip_id, snr, gt, est, err in rows:
            fh.write(f"{clip_id},{_fmt(snr)},{gt},{est},{_fmt(err)}\n")


def cmd_eval(config: ExperimentConfig) -> Path:
    """Evaluate LocSelect, the unmasked ablation, and the GCC-PHAT oracle."""
    out = config.out_path()
    config_hash = config.config_hash()
    rho = config.coding.rho_deg

    checkpoints = {}
    for stage, variant in (("mask", None), ("doa", "locselect"), ("doa-unmasked", "unmasked")):
        path, _ = _checkpoint_paths(config, stage)
        if not path.exists():
            raise PipelineError(f"checkpoint for stage {stage!r} missing — train first")
        store, meta = ParamStore.load(path)
        if meta.get("config_hash") != config_hash:
            raise PipelineError(
                f"checkpoint {path} hash {meta.get('config_hash')} does not match "
                f"config {config_hash}"
            )
        checkpoints[stage] = store
    doa_cfg = config.doanet.net_config(config.n_freq, config.coding.sigma_theta_deg)

    test_records = load_split_records(config, "test")
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    variant_rows: dict[str, FrameRows] = {v: FrameRows([], []) for v in VARIANTS}
    snr_values = [r["snr_db"] for r in test_records]
    sample_snr = (config.report.sample_clip_snr_db
                  if config.report.sample_clip_snr_db in snr_values
                  else min(snr_values, key=lambda s: abs(s - config.report.sample_clip_snr_db)))
    fig3_target = min(config.report.sample_clip_index, snr_values.count(sample_snr) - 1)
    fig3_written = set()
    sample_index = {v: 0 for v in VARIANTS}
    for record in test_records:
        mixture = _clip_wave(config, "test", record, "mixture")
        reference = (_clip_wave(config, "test", record, "reference")
                     if record["wav"].get("reference") else None)
        gt_class = record["theta_class"]
        for variant in VARIANTS:
            if variant == "locselect":
                result = infer(mixture, reference, checkpoints["mask"],
                               checkpoints["doa"], doa_cfg,
                               config.stft.win, config.stft.hop)
            else:
                result = infer(mixture, None, None, checkpoints["doa-unmasked"],
                               doa_cfg, config.stft.win, config.stft.hop)
            rows = variant_rows[variant]
            for frame, est in enumerate(result.trace):
                err = float(coding.circular_distance(est, gt_class))
                rows.rows.append((record["clip_id"], record["snr_db"], frame,
                                  gt_class, int(est), err))
            clip_err = float(coding.circular_distance(result.clip_doa, gt_class))
            rows.clip_rows.append((record["clip_id"], record["snr_db"], gt_class,
                                   result.clip_doa, clip_err))
            # Fig.3-style pre-sigmoid dump for the configured sample clip
            if record["snr_db"] == sample_snr:
                if sample_index[variant] == fig3_target \
                        and variant not in fig3_written:
                    _write_fig3_csv(report_dir / f"fig3_{variant}.csv", record, result)
                    fig3_written.add(variant)
                sample_index[variant] += 1

    # classical oracle on the single-source anechoic audit scenes
    audit_records = load_split_records(config, "audit")
    gcc_rows = []
    for record in audit_records:
        mixture = _clip_wave(config, "audit", record, "mixture")
        spacing = float(np.linalg.norm(np.array(record["mic2"]) - np.array(record["mic1"])))
        theta_hat = estimate_doa_gcc(mixture.samples[0], mixture.samples[1],
                                     spacing, config.sample_rate)
        bound = lag_quantization_bound_deg(record["theta_deg"], spacing,
                                           config.sample_rate) + 1e-9
        err = abs(theta_hat - record["theta_deg"])
        gcc_rows.append((record["clip_id"], record["theta_deg"], theta_hat, err, bound))

    for variant in VARIANTS:
        _write_trace_csv(report_dir / f"trace_{variant}.csv", variant_rows[variant].rows)
        _write_clip_csv(report_dir / f"clips_{variant}.csv", variant_rows[variant].clip_rows)
    with open(report_dir / "gcc_audit.csv", "w") as fh:
        fh.write("#schema locselect/gcc-audit v1\n")
        fh.write("clip_id,theta_gt,theta_est,abs_err,quantization_bound\n")
        for clip_id, gt, est, err, bound in gcc_rows:
            fh.write(f"{clip_id},{_fmt(gt)},{_fmt(est)},{_fmt(err)},{_fmt(bound)}\n")

    cells = []
    for variant in VARIANTS:
        rows = variant_rows[variant]
        for snr in config.snr_grid_db:
            frame_errs = np.array([r[5] for r in rows.rows if r[1] == snr])
            clip_errs = np.array([r[4] for r in rows.clip_rows if r[1] == snr])
            if frame_errs.size < config.dataset.min_frames_per_cell:
                raise PipelineError(
                    f"cell ({variant}, {snr} dB) has {frame_errs.size} frames, "
                    f"fewer than the configured minimum {config.dataset.min_frames_per_cell}"
                )
            cells.append({
                "variant": variant, "split": "test", "snr_db": snr,
                "n_clips": int(clip_errs.size), "n_frames": int(frame_errs.size),
                "mae_frame_deg": float(frame_errs.mean()),
                "acc_frame": float(np.mean(frame_errs <= rho)),
                "mae_clip_deg": float(clip_errs.mean()),
                "acc_clip": float(np.mean(clip_errs <= rho)),
            })
    gcc_errs = np.array([r[3] for r in gcc_rows])
    in_bound = np.array([r[3] <= r[4] for r in gcc_rows])
    cells.append({
        "variant": "gcc_phat", "split": "audit", "snr_db": None,
        "n_clips": int(gcc_errs.size), "n_frames": None,
        "mae_frame_deg": None, "acc_frame": None,
        "mae_clip_deg": float(gcc_errs.mean()),
        "acc_clip": float(np.mean(gcc_errs <= rho)),
        "within_quantization_bound": float(in_bound.mean()),
    })

    with open(report_dir / "summary.csv", "w") as fh:
        fh.write("#schema locselect/summary v1\n")
        fh.write("variant,split,snr_db,n_clips,n_frames,mae_frame_deg,acc_frame,"
                 "mae_clip_deg,acc_clip\n")
        for cell in cells:
            fields = [cell["variant"], cell["split"],
                      "" if cell["snr_db"] is None else _fmt(cell["snr_db"]),
                      str(cell["n_clips"]),
                      "" if cell["n_frames"] is None else str(cell["n_frames"]),
                      "" if cell["mae_frame_deg"] is None else _fmt(cell["mae_frame_deg"]),
                      "" if cell["acc_frame"] is None else _fmt(cell["acc_frame"]),
                      _fmt(cell["mae_clip_deg"]), _fmt(cell["acc_clip"])]
            fh.write(",".join(fields) + "\n")

    report = {
        "schema": "locselect/report", "version": 1,
        "config_hash": config_hash, "revision": git_revision(),
        "rho_deg": rho, "snr_grid_db": list(config.snr_grid_db),
        "cells": cells,
        "gcc_within_bound_fraction": float(in_bound.mean()),
    }
    with open(report_dir / "report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    _log(config, f"eval: wrote {report_dir}/report.json "
                 f"({len(test_records)} test clips, {len(audit_records)} audit clips)")
    return report_dir


def _write_fig3_csv(path: Path, record: dict, result) -> None:
    interferer = record.get("interferer_theta_deg")
    with open(path, "w") as fh:
        fh.write("#schema locselect/fig3 v1\n")
        fh.write(f"#clip_id {record['clip_id']}\n")
        fh.write(f"#theta_gt_deg {_fmt(record['theta_deg'])}\n")
        if interferer is not None:
            fh.write(f"#interferer_deg {_fmt(interferer)}\n")
        fh.write("frame," + ",".join(f"theta_{k}" for k in range(1, 361)) + "\n")
        for frame in range(result.pre_sigmoid.shape[0]):
            values = ",".join(_fmt(v) for v in result.pre_sigmoid[frame])
            fh.write(f"{frame},{values}\n")


def load_summary(report_dir: Path) -> list[dict]:
    """Parse summary.csv back into cells (used by plots and tests)."""
    rows = []
    with open(report_dir / "summary.csv") as fh:
        lines = [l.rstrip("\n") for l in fh if not l.startswith("#")]
    header = lines[0].split(",")
    for line in lines[1:]:
        parts = line.split(",")
        row = dict(zip(header, parts))
        for key in ("snr_db", "mae_frame_deg", "acc_frame", "mae_clip_deg", "acc_clip"):
            row[key] = float(row[key]) if row[key] != "" else None
        for key in ("n_clips", "n_frames"):
            row[key] = int(row[key]) if row[key] != "" else None
        rows.append(row)
    return rows
