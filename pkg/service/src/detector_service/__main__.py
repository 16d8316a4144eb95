"""Run the detector service: tagmap-detector [--port N] [--fixtures FILE]."""

from __future__ import annotations

import argparse
import os
import sys

import uvicorn

from detector_service.app import create_app
from detector_service.models import StubModel

PORT_ENV = "TAGMAP_DETECTOR_PORT"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tagmap-detector", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument(
        "--port",
        type=int,
        default=int(os.environ.get(PORT_ENV, "8750")),
        help=f"listen port (default from ${PORT_ENV} or 8750)",
    )
    parser.add_argument("--fixtures", help="stub-model fixtures JSON file")
    args = parser.parse_args(argv)

    model = StubModel.from_fixtures_file(args.fixtures) if args.fixtures else StubModel()
    app = create_app(model)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
