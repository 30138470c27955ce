import pytest

# Expressions shared by the round-trip, derivative and recurrence properties.
CORPUS = (
    "z",
    "s",
    "z + 1",
    "z + exp(s*z)",
    "z + exp((s - 1)*z)",
    "z + z^2/s^2 + z^3/s^3",
    "z*cos(2^s*z) + sin(z)/(s^2 + 1) + sin(z)^2/(s^2 + 1)^2",
    "z + 2^s",
    "z*exp(2^s)",
    "z + s*z^2",
    "2 + sin(2*pi*s)",
    "exp(s*z)",
    "-z + 3*s",
    "z^3 - 2*z*s + i",
    "(z - s)/(2 + z*z)",
    "log(z + 2) - sqrt(s + 3)",
    "cos(z)*sin(s) - -z",
    "z + 0.5*exp(-(2)*s)*z",
)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion, printed at the end of the run."""
    lines = request.config._acceptance_lines

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda t: int(t.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
