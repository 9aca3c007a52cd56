def itervaluerefs(self):
    if self._pending_removals:
        self._commit_removals()
    with _IterationGuard(self):
        yield from self.data.values()