import os
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional
import numpy as np
import pandas as pd
from Errors import DataError
from Model import Checkpoint, save_checkpoint, load_checkpoint

logger = logging.getLogger(__name__)

TRACE_FILE = "trace.csv"
PI_FILE = "pi.json"
SAMPLES_FILE = "samples.json"
CHECKPOINT_FILE = "checkpoint.json"
MODEL_FILE = "model.json"


@dataclass
class ChainSample:
    iteration: int
    z: np.ndarray
    pi: Optional[np.ndarray] = None


@dataclass
class ChainTrace:
    algorithm: str
    K: int
    hyperparameters: dict
    iterations: List[int] = field(default_factory=list)
    log_joint: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    acceptance_rate: List[float] = field(default_factory=list)
    epsilon: List[float] = field(default_factory=list)
    pi_path: List[np.ndarray] = field(default_factory=list)
    samples: List[ChainSample] = field(default_factory=list)
    final: Optional[Checkpoint] = None
    diagnostics: dict = field(default_factory=dict)

    def record(self, iteration, log_joint, seconds, pi=None, acceptance_rate=None, epsilon=None):
        self.iterations.append(int(iteration))
        self.log_joint.append(float(log_joint))
        self.seconds.append(float(seconds))
        if pi is not None:
            self.pi_path.append(np.array(pi, copy=True))
        if acceptance_rate is not None:
            self.acceptance_rate.append(float(acceptance_rate))
            self.epsilon.append(float(epsilon))

    def add_sample(self, iteration, z, pi=None):
        self.samples.append(
            ChainSample(int(iteration), np.array(z, copy=True), None if pi is None else np.array(pi, copy=True))
        )

    def to_frame(self):
        frame = pd.DataFrame({"iteration": self.iterations, "log_joint": self.log_joint})
        if self.acceptance_rate:
            frame["acceptance_rate"] = self.acceptance_rate
            frame["epsilon"] = self.epsilon
        # Timing stays in the last column so comparisons can drop it.
        frame["seconds"] = self.seconds
        return frame

    def posterior_mean_pi(self):
        pis = [sample.pi for sample in self.samples if sample.pi is not None]
        if not pis:
            return None
        return np.mean(pis, axis=0)


class Chain:
    """A run directory holding one chain's trace, samples and checkpoint."""

    def __init__(self, directory):
        self.directory = directory

    def path(self, file_name):
        return os.path.join(self.directory, file_name)

    def exists(self):
        return os.path.exists(self.path(MODEL_FILE))

    def save(self, trace: ChainTrace, metadata: dict):
        os.makedirs(self.directory, exist_ok=True)
        trace.to_frame().to_csv(self.path(TRACE_FILE), index=False, lineterminator="\n")
        if trace.pi_path:
            self._write_json(
                PI_FILE,
                {"iterations": trace.iterations, "pi": [p.tolist() for p in trace.pi_path]},
            )
        self._write_json(
            SAMPLES_FILE,
            {
                "samples": [
                    {
                        "iteration": sample.iteration,
                        "pi": None if sample.pi is None else sample.pi.tolist(),
                        "z": sample.z.tolist(),
                    }
                    for sample in trace.samples
                ]
            },
        )
        if trace.final is not None:
            save_checkpoint(trace.final, self.path(CHECKPOINT_FILE))
        metadata = dict(metadata)
        metadata.update(
            {
                "algorithm": trace.algorithm,
                "K": trace.K,
                "hyperparameters": trace.hyperparameters,
                "diagnostics": trace.diagnostics,
            }
        )
        self.save_metadata(metadata)

    def save_metadata(self, metadata):
        os.makedirs(self.directory, exist_ok=True)
        self._write_json(MODEL_FILE, metadata)

    def load_metadata(self):
        if not self.exists():
            raise DataError(f"No {MODEL_FILE} in {self.directory}")
        return self._read_json(MODEL_FILE)

    def load_trace(self) -> ChainTrace:
        metadata = self.load_metadata()
        trace = ChainTrace(metadata["algorithm"], metadata["K"], metadata["hyperparameters"])
        trace.diagnostics = metadata.get("diagnostics", {})
        frame = pd.read_csv(self.path(TRACE_FILE))
        trace.iterations = frame["iteration"].astype(int).tolist()
        trace.log_joint = frame["log_joint"].astype(float).tolist()
        trace.seconds = frame["seconds"].astype(float).tolist()
        if "acceptance_rate" in frame:
            trace.acceptance_rate = frame["acceptance_rate"].astype(float).tolist()
            trace.epsilon = frame["epsilon"].astype(float).tolist()
        if os.path.exists(self.path(PI_FILE)):
            trace.pi_path = [np.asarray(p) for p in self._read_json(PI_FILE)["pi"]]
        for item in self._read_json(SAMPLES_FILE)["samples"]:
            trace.samples.append(
                ChainSample(
                    item["iteration"],
                    np.asarray(item["z"], dtype=np.int64),
                    None if item["pi"] is None else np.asarray(item["pi"]),
                )
            )
        if os.path.exists(self.path(CHECKPOINT_FILE)):
            trace.final = load_checkpoint(self.path(CHECKPOINT_FILE))
        return trace

    def _write_json(self, file_name, payload):
        with open(self.path(file_name), "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f)
            f.write("\n")

    def _read_json(self, file_name):
        try:
            with open(self.path(file_name), "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"Cannot read {self.path(file_name)}: {e}") from e


def get_chains(root):
    """Run directories below ``root``: the root itself or its chain-* folders."""
    if Chain(root).exists():
        return [Chain(root)]
    if not os.path.isdir(root):
        raise DataError(f"Model directory {root} does not exist")
    chains = [
        Chain(os.path.join(root, name))
        for name in sorted(os.listdir(root))
        if name.startswith("chain-") and Chain(os.path.join(root, name)).exists()
    ]
    if not chains:
        raise DataError(f"No trained model found in {root}")
    return chains


def add_chain(root, index):
    directory = os.path.join(root, f"chain-{index}")
    os.makedirs(directory, exist_ok=True)
    return Chain(directory)
