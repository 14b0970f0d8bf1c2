class ContractError(ValueError):
    """A caller broke an operation's precondition."""


class SolverFailure(RuntimeError):
    """The solver could not produce a trustworthy answer (e.g. singular basis)."""


class BlockInfeasible(RuntimeError):
    def __init__(self, block: int, status: str):
        super().__init__(f"evaluation block {block} ended with status {status}")
        self.block = block
        self.status = status
