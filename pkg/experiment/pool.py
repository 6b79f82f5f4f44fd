import logging
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Callable, Dict, Hashable, Optional


class ScenarioPool:
    """Worker pool for independent scenario evaluations

    Results are handed back sorted by key so aggregation never depends on
    completion order.
    """

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))
        self.executor: Optional[ThreadPoolExecutor] = None
        self.pending: Dict[Hashable, Future] = {}
        self.logger = logging.getLogger(__name__)

    def start(self):
        """Start the worker threads"""
        if self.executor is None:
            self.executor = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="scenario")
            self.logger.debug(f"✅ Scenario pool started with {self.workers} worker(s)")

    def stop(self):
        """Wait for running work and release the threads"""
        if self.executor is None:
            self.logger.debug("🛑 Scenario pool already stopped.")
            return
        self.executor.shutdown(wait=True)
        self.executor = None
        self.logger.debug("🛑 Scenario pool stopped.")

    def submit(self, key: Hashable, func: Callable, *args, **kwargs):
        if self.executor is None:
            self.start()
        if key in self.pending:
            raise ValueError(f"duplicate job key {key!r}")
        self.pending[key] = self.executor.submit(func, *args, **kwargs)

    def collect(self) -> Dict[Hashable, object]:
        """Block until every submitted job finished; re-raises the first failure in key order"""
        jobs, self.pending = self.pending, {}
        return {key: jobs[key].result() for key in sorted(jobs)}

    def job_count(self) -> int:
        return len(self.pending)

    def __enter__(self) -> "ScenarioPool":
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
