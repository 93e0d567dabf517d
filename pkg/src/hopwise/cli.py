"""Command-line interface (subcommands wired in cli build step)."""


def main(argv=None):
    raise SystemExit("cli not built yet")
