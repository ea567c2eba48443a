"""Fixed-shape executor pool with greedy descending batch decomposition.

A profile set fixes the candidate-batch shapes for which executors exist.
Each executor owns buffers allocated once at construction and a pre-bound run
closure over the model at its fixed shape; available executor ids wait in a
per-shape FIFO queue. Requests are split greedily into profile-shaped chunks
(largest shape first, remainder padded up to the smallest shape with zero
embeddings), chunks run concurrently on distinct executors, and padded rows
never surface.

``ImplicitShapeRunner`` is the baseline the ablation harness compares
against: per-request buffers sized to the exact batch, no pool, so every
request allocates.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from queue import Queue

import numpy as np

from .model import ModelConfig, ModelParams, model_forward


class PoolClosedError(RuntimeError):
    """The executor pool has been shut down."""


@dataclass(frozen=True)
class ProfileSet:
    shapes: tuple[int, ...]
    executors_per_shape: int = 2

    def __post_init__(self) -> None:
        if not self.shapes:
            raise ValueError("profile set needs at least one shape")
        if any(s < 1 for s in self.shapes):
            raise ValueError("shapes must be >= 1")
        if list(self.shapes) != sorted(set(self.shapes)):
            raise ValueError("shapes must be strictly increasing")
        if self.executors_per_shape < 1:
            raise ValueError("executors_per_shape must be >= 1")

    @property
    def min_shape(self) -> int:
        return self.shapes[0]


@dataclass(frozen=True)
class Chunk:
    shape: int
    real_count: int
    pad_count: int


@dataclass(frozen=True)
class ChunkPlan:
    chunks: tuple[Chunk, ...]
    total_real: int


def plan_chunks(batch_size: int, profiles: ProfileSet) -> ChunkPlan:
    """Greedy decomposition: largest shape that fits, repeatedly; pad the tail.

    A remainder smaller than the smallest shape becomes one minimum-shape
    chunk whose padding rows are discarded after scoring.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    chunks: list[Chunk] = []
    remaining = batch_size
    while remaining >= profiles.min_shape:
        shape = max(s for s in profiles.shapes if s <= remaining)
        chunks.append(Chunk(shape, shape, 0))
        remaining -= shape
    if remaining > 0:
        chunks.append(Chunk(profiles.min_shape, remaining, profiles.min_shape - remaining))
    return ChunkPlan(tuple(chunks), batch_size)


@dataclass(frozen=True)
class ExecutionResult:
    scores: np.ndarray
    compute_s: float
    chunk_count: int


class AllocationCounter:
    """Counts staging-buffer allocations on the request path."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.total = 0

    def bump(self) -> None:
        with self._lock:
            self.total += 1


class Executor:
    """One fixed-shape compute slot: preallocated buffers plus a bound run closure."""

    def __init__(
        self,
        executor_id: int,
        shape: int,
        params: ModelParams,
        config: ModelConfig,
        counter: AllocationCounter,
        attn_impl: str = "fused",
    ) -> None:
        self.id = executor_id
        self.shape = shape

        def alloc(buf_shape: tuple[int, ...]) -> np.ndarray:
            counter.bump()
            return np.zeros(buf_shape)

        self.hist_buf = alloc((config.max_history_len, config.hidden_dim))
        self.cand_buf = alloc((shape, config.hidden_dim))
        self.out_buf = alloc((shape, config.num_tasks))

        def bound_run(hist_len: int) -> np.ndarray:
            self.out_buf[:] = model_forward(
                self.hist_buf[:hist_len], self.cand_buf, params, config, attn_impl=attn_impl
            )
            return self.out_buf

        self.bound_run = bound_run


class ExecutorPool:
    """Executors behind per-shape FIFO queues; acquire blocks for backpressure."""

    def __init__(
        self,
        profiles: ProfileSet,
        params: ModelParams,
        config: ModelConfig,
        attn_impl: str = "fused",
    ) -> None:
        self.profiles = profiles
        self.config = config
        self._counter = AllocationCounter()
        self._executors: dict[int, Executor] = {}
        self._queues: dict[int, Queue[int]] = {shape: Queue() for shape in profiles.shapes}
        self._checked_out: set[int] = set()
        self._state_lock = threading.Lock()
        self._closed = False

        next_id = 0
        for shape in profiles.shapes:
            for _ in range(profiles.executors_per_shape):
                ex = Executor(next_id, shape, params, config, self._counter, attn_impl)
                self._executors[next_id] = ex
                self._queues[shape].put(next_id)
                next_id += 1

        self._workers = ThreadPoolExecutor(
            max_workers=len(self._executors), thread_name_prefix="executor"
        )
        self._warmup_allocations = self._counter.total

    @property
    def executor_count(self) -> int:
        return len(self._executors)

    def queue_size(self, shape: int) -> int:
        return self._queues[shape].qsize()

    @property
    def steady_state_allocations(self) -> int:
        return self._counter.total - self._warmup_allocations

    def acquire(self, shape: int) -> Executor:
        if shape not in self._queues:
            raise ValueError(f"no executors for shape {shape}")
        if self._closed:
            raise PoolClosedError("pool is shut down")
        executor_id = self._queues[shape].get()
        with self._state_lock:
            self._checked_out.add(executor_id)
        return self._executors[executor_id]

    def release(self, executor: Executor) -> None:
        with self._state_lock:
            if executor.id not in self._checked_out:
                raise RuntimeError(f"executor {executor.id} was not checked out")
            self._checked_out.discard(executor.id)
        self._queues[executor.shape].put(executor.id)

    def execute(self, history: np.ndarray, candidates: np.ndarray) -> ExecutionResult:
        """Score a request by routing profile-shaped chunks onto executors."""
        if self._closed:
            raise PoolClosedError("pool is shut down")
        if candidates.shape[0] < 1:
            raise ValueError("candidate count must be >= 1")
        plan = plan_chunks(candidates.shape[0], self.profiles)
        hist_len = history.shape[0]

        def run_chunk(chunk: Chunk, start: int) -> tuple[np.ndarray, float, float]:
            ex = self.acquire(chunk.shape)
            try:
                t0 = time.perf_counter()
                ex.hist_buf[:hist_len] = history
                ex.cand_buf[: chunk.real_count] = candidates[start : start + chunk.real_count]
                ex.cand_buf[chunk.real_count :] = 0.0
                out = ex.bound_run(hist_len)
                scores = out[: chunk.real_count].copy()
                t1 = time.perf_counter()
                return scores, t0, t1
            finally:
                self.release(ex)

        starts = []
        pos = 0
        for chunk in plan.chunks:
            starts.append(pos)
            pos += chunk.real_count

        if len(plan.chunks) == 1:
            results = [run_chunk(plan.chunks[0], 0)]
        else:
            futures = [
                self._workers.submit(run_chunk, chunk, start)
                for chunk, start in zip(plan.chunks, starts)
            ]
            results = [f.result() for f in futures]

        scores = np.concatenate([r[0] for r in results], axis=0)
        compute_s = max(r[2] for r in results) - min(r[1] for r in results)
        return ExecutionResult(scores, compute_s, len(plan.chunks))

    def shutdown(self) -> None:
        self._closed = True
        self._workers.shutdown(wait=True)


def build_pool(
    profiles: ProfileSet,
    params: ModelParams,
    config: ModelConfig,
    attn_impl: str = "fused",
) -> ExecutorPool:
    return ExecutorPool(profiles, params, config, attn_impl=attn_impl)


def execute_request(history: np.ndarray, candidates: np.ndarray, pool: ExecutorPool) -> np.ndarray:
    """Chunked scoring; rows come back in the original candidate order."""
    return pool.execute(history, candidates).scores


class ImplicitShapeRunner:
    """Baseline router: exact-shape buffers allocated per request, no pool."""

    def __init__(self, params: ModelParams, config: ModelConfig, attn_impl: str = "fused") -> None:
        self._params = params
        self._config = config
        self._attn_impl = attn_impl
        self._counter = AllocationCounter()

    @property
    def steady_state_allocations(self) -> int:
        return self._counter.total

    def execute(self, history: np.ndarray, candidates: np.ndarray) -> ExecutionResult:
        def alloc(buf_shape: tuple[int, ...]) -> np.ndarray:
            self._counter.bump()
            return np.zeros(buf_shape)

        hist_buf = alloc(history.shape)
        cand_buf = alloc(candidates.shape)
        out_buf = alloc((candidates.shape[0], self._config.num_tasks))
        hist_buf[:] = history
        cand_buf[:] = candidates
        t0 = time.perf_counter()
        out_buf[:] = model_forward(
            hist_buf, cand_buf, self._params, self._config, attn_impl=self._attn_impl
        )
        t1 = time.perf_counter()
        return ExecutionResult(out_buf.copy(), t1 - t0, 1)

    def shutdown(self) -> None:
        pass
