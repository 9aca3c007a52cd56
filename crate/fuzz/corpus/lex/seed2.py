def _le_from_gt(self, other, NotImplemented=NotImplemented):
    op_result = type(self).__gt__(self, other)
    if op_result is NotImplemented:
        return op_result
    return not op_result