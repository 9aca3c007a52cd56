def __init__(self, message=None):
    self._labels = []
    self._visible = Message()
    Message.__init__(self, message)