def outer(x):
    """Doc."""
    def helper(y):
        return y
    return helper(x)  # call
