from symfin.runner import EXIT_CONFIG, SymRunner
from symfin.config import COMMANDS, Config
from symfin.utils import load_config
from pydantic import ValidationError
from pydantic_settings import SettingsError
import argparse
import yaml
import re
import sys


def main(config_pyd: Config) -> int:
    """Main function to run one command."""
    # Create the runner
    runner = SymRunner(config_pyd)
    # Run the command
    return runner.run()


def _grid_flags(text: str) -> list[str]:
    """--grid NxXNyXNt as nested mesh flags."""
    match = re.fullmatch(r"(\d+)[xX](\d+)[xX](\d+)", text)
    if match is None:
        raise argparse.ArgumentTypeError(f"Invalid grid '{text}', expected NxXNyXNt, e.g. 101x101x400")
    nx, ny, nt = match.groups()
    return [f"--mesh.nx={nx}", f"--mesh.ny={ny}", f"--mesh.nt={nt}"]


def cli_entrypoint() -> None:
    parser = argparse.ArgumentParser(
        description="Lie point symmetries of linear evolution equations in finance.",
        epilog="Every configuration field is also available as a nested flag, e.g. --mesh.nx=101.",
    )
    parser.add_argument("command", choices=COMMANDS, help="Command to run")
    parser.add_argument("--config", type=str, default="", help="Configuration file (YAML, JSON or TOML)")
    parser.add_argument("--model", type=str, default=None, help="Catalog id of the equation")
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    parser.add_argument("--grid", type=_grid_flags, default=None, help="Grid as NxXNyXNt")
    parser.add_argument("--tol", type=float, default=None, help="Finite-difference error tolerance")

    # Parse the short flags, the rest goes to the settings parser
    args, unknown = parser.parse_known_args()
    overrides = [f"--command={args.command}"]
    if args.model is not None:
        overrides.append(f"--pde.catalog_id={args.model}")
    if args.out is not None:
        overrides.append(f"--save_dir={args.out}")
    if args.grid is not None:
        overrides.extend(args.grid)
    if args.tol is not None:
        overrides.append(f"--tolerances.fd_error={args.tol}")
    sys.argv = [sys.argv[0]] + unknown + overrides
    try:
        # File values have the lowest priority, below environment and flags
        file_config = load_config(args.config) if args.config else {}
        config_parser = Config(**file_config)
    except (ValidationError, SettingsError, OSError, ValueError, yaml.YAMLError) as err:
        print(f"Configuration error: {err}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)

    # Call the main function
    sys.exit(main(config_parser))


if __name__ == "__main__":
    cli_entrypoint()
