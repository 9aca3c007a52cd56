def dis(self):
    co = self.codeobj
    if self.current_offset is not None:
        offset = self.current_offset
    else:
        offset = -1
    with io.StringIO() as output:
        _disassemble_bytes(co.co_code, varnames=co.co_varnames,
                           names=co.co_names, constants=co.co_consts,
                           cells=self._cell_names,
                           linestarts=self._linestarts,
                           line_offset=self._line_offset,
                           file=output,
                           lasti=offset)
        return output.getvalue()