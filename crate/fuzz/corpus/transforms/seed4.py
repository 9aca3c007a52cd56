def read(self, size=-1):
    self._unsupported("read")