import sys


class Printer:
    """Reports go to the standard output, outcomes to the standard error (colored on terminals)."""

    def __init__(self, context):
        self.logger = context.logger
        if sys.stderr.isatty():
            self.OK = "\033[92m"
            self.WARNING = "\033[1m\033[38;5;166m"
            self.FAIL = "\033[1m\033[91m"
            self.RESET = "\033[0m"
        else:
            self.OK = self.WARNING = self.FAIL = self.RESET = ""

    def _to_stderr(self, ansi_markup: str, title: str, text: str):
        print(f"{ansi_markup}{title}: {text}{self.RESET}", file=sys.stderr)

    def __call__(self, message: str):
        print(message)

    def success(self, message: str):
        self.logger.info(f"Success: {message}")
        self._to_stderr(self.OK, "Done", message)

    def abort(self, message: str):
        self.logger.warning(f"Abort: {message}")
        self._to_stderr(self.WARNING, "Invalid input", message)

    def fail(self, message: str):
        self.logger.error(f"Fail: {message}")
        self._to_stderr(self.FAIL, "Numerical failure", message)
