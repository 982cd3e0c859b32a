"""Objective evaluation of generated clips and of the autoencoder's protocols."""

from __future__ import annotations

from typing import TYPE_CHECKING, Final

import numpy as np

from avatar.talking._logging import null_logger
from avatar.talking.metrics import akd, frechet_from_features, lipsync_proxy, msi, psnr
from avatar.talking.models.reports import ClipMetrics, MetricReport, ProtocolMetrics
from avatar.talking.synthetic.speech import feature_energy
from avatar.talking.topology import mouth_openness
from avatar.talking.vae.readout import RidgeReadout, frame_features
from avatar.talking.vae.reenact import reenact, self_reconstruct

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from avatar.talking.clip import VideoClip
    from avatar.talking.vae.networks import FrameAutoencoder

logger: Final = null_logger(__name__)

CROSS_ROUNDS: Final = 5
CROSS_FRAMES: Final = 100


def clip_metrics(
    name: str, generated: VideoClip, reference: VideoClip
) -> ClipMetrics:
    """Metrics of one generated clip against its reference clip.

    Both clips are cut to the shorter length. The lip-sync proxy correlates the
    generated mouth openness with the energy of the driving speech.
    """
    n = min(generated.n_frames, reference.n_frames)
    landmarks = generated.landmarks[:n]
    return ClipMetrics(
        name=name,
        psnr_db=psnr(generated.frames[:n], reference.frames[:n]),
        akd_px=akd(landmarks, reference.landmarks[:n]),
        msi=msi(landmarks),
        lipsync_corr=lipsync_proxy(
            mouth_openness(landmarks), feature_energy(generated.speech_features[:n])
        ),
    )


def fit_frame_readout(
    clips: Sequence[VideoClip], ridge: float = 1e-3
) -> RidgeReadout:
    """Pixel-feature to landmark read-out fitted on ``clips``."""
    return RidgeReadout.fit(
        np.concatenate([frame_features(c.frames) for c in clips]),
        np.concatenate([c.landmarks for c in clips]),
        ridge,
    )


def _protocol(
    rounds: int,
    frames_per_round: int,
    outputs: list[NDArray[np.float32]],
    targets: list[NDArray[np.float32]],
    target_landmarks: list[NDArray[np.float32]],
    readout: RidgeReadout,
    with_psnr: bool,
) -> ProtocolMetrics:
    predicted = [readout.predict(frame_features(o)) for o in outputs]
    return ProtocolMetrics(
        rounds=rounds,
        frames_per_round=frames_per_round,
        frames_evaluated=sum(o.shape[0] for o in outputs),
        psnr_db=(
            float(np.mean([psnr(o, t) for o, t in zip(outputs, targets, strict=True)]))
            if with_psnr
            else None
        ),
        akd_px=float(
            np.mean(
                [akd(p, t) for p, t in zip(predicted, target_landmarks, strict=True)]
            )
        ),
        msi=float(np.mean([msi(p) for p in predicted])),
        frechet=frechet_from_features(
            frame_features(np.concatenate(targets)),
            frame_features(np.concatenate(outputs)),
        ),
    )


def self_reconstruction_protocol(
    vae: FrameAutoencoder, clips: Sequence[VideoClip], readout: RidgeReadout
) -> ProtocolMetrics:
    """Reconstruct every clip from its first frame and its own landmark track."""
    outputs = [
        self_reconstruct(vae, c.frames, c.landmarks).cpu().numpy() for c in clips
    ]
    return _protocol(
        1,
        max(c.n_frames for c in clips),
        outputs,
        [c.frames for c in clips],
        [c.landmarks for c in clips],
        readout,
        with_psnr=True,
    )


def cross_reenactment_protocol(
    vae: FrameAutoencoder,
    clips: Sequence[VideoClip],
    readout: RidgeReadout,
    seed: int = 0,
    rounds: int = CROSS_ROUNDS,
    frames_per_round: int = CROSS_FRAMES,
) -> ProtocolMetrics:
    """Drive random frames of other clips with each clip's landmark track.

    Every driving clip is used for ``rounds`` rounds. Each round picks a source
    frame from another clip (the clip itself when there is only one) and a
    window of ``frames_per_round`` driving frames, or the whole clip if shorter.
    There is no ground-truth frame, so no PSNR is reported.
    """
    rng = np.random.default_rng(seed)
    outputs, targets, target_landmarks = [], [], []
    for d, driving in enumerate(clips):
        others = [i for i in range(len(clips)) if i != d] or [d]
        length = min(frames_per_round, driving.n_frames)
        for _ in range(rounds):
            source = clips[others[int(rng.integers(len(others)))]]
            frame = source.frames[int(rng.integers(source.n_frames))]
            start = int(rng.integers(0, driving.n_frames - length + 1))
            window = slice(start, start + length)
            out = reenact(
                vae,
                frame,
                driving.landmarks[window],
                driving_frames=driving.frames[window],
            )
            outputs.append(out.cpu().numpy())
            targets.append(driving.frames[window])
            target_landmarks.append(driving.landmarks[window])
    logger.debug(f"Cross-reenacted {len(outputs)} rounds over {len(clips)} clips")
    return _protocol(
        rounds,
        frames_per_round,
        outputs,
        targets,
        target_landmarks,
        readout,
        with_psnr=False,
    )


def run_evaluation(
    generated_clips: Sequence[VideoClip],
    reference_clips: Sequence[VideoClip],
    vae: FrameAutoencoder | None = None,
    frame_readout: RidgeReadout | None = None,
    seed: int = 0,
    names: Sequence[str] | None = None,
) -> MetricReport:
    """Evaluate generated clips against aligned reference clips.

    Args:
        generated_clips: Generated videos; their landmarks are the read-out
            track and their speech features the driving speech.
        reference_clips: Ground-truth clips, aligned with ``generated_clips``.
        vae: When given, the self-reconstruction and cross-reenactment protocols
            are run on the reference clips.
        frame_readout: Maps reconstructed frames to landmarks for the protocols.
            Fitted on the reference clips when omitted.
        seed: Seeds the cross-reenactment sampling.
        names: Clip names for the per-clip breakdown.

    Returns:
        Means of the per-clip metrics, the Fréchet distance over all frames and,
        with a ``vae``, the two protocol results.

    Raises:
        ValueError: If the lists are empty or differ in length.
    """
    if not generated_clips or not reference_clips:
        raise ValueError("Cannot evaluate empty clip lists")
    if len(generated_clips) != len(reference_clips):
        raise ValueError(
            f"Got {len(generated_clips)} generated clips for "
            f"{len(reference_clips)} reference clips"
        )
    if names is None:
        names = [
            c.identity_id or f"clip_{i:04d}" for i, c in enumerate(reference_clips)
        ]
    per_clip = [
        clip_metrics(name, g, r)
        for name, g, r in zip(names, generated_clips, reference_clips, strict=True)
    ]
    report = MetricReport(
        psnr_db=float(np.mean([m.psnr_db for m in per_clip])),
        akd_px=float(np.mean([m.akd_px for m in per_clip])),
        msi=float(np.mean([m.msi for m in per_clip])),
        frechet=frechet_from_features(
            frame_features(np.concatenate([c.frames for c in reference_clips])),
            frame_features(np.concatenate([c.frames for c in generated_clips])),
        ),
        lipsync_corr=float(np.mean([m.lipsync_corr for m in per_clip])),
        per_clip=per_clip,
    )
    if vae is not None:
        readout = frame_readout or fit_frame_readout(reference_clips)
        report.self_reconstruction = self_reconstruction_protocol(
            vae, reference_clips, readout
        )
        report.cross_reenactment = cross_reenactment_protocol(
            vae, reference_clips, readout, seed
        )
    logger.info(
        f"Evaluated {len(per_clip)} clips: PSNR {report.psnr_db:.2f} dB, "
        f"AKD {report.akd_px:.3f} px, lip-sync {report.lipsync_corr:.3f}"
    )
    return report
