# src/apps/pipeline/management/commands/rerun.py
from __future__ import annotations

import logging
from pathlib import Path

from django.conf import settings
from django.core.management import call_command

from apps.common.errors import ConfigMismatch
from apps.pipeline.management.base import SeatrackCommand, add_out_argument
from apps.pipeline.manifest import read_manifest, sha256_file

logger = logging.getLogger(__name__)


class Command(SeatrackCommand):
    help = "Replay a command from its manifest.json into a new output directory."

    input_options = ("manifest",)
    writes_manifest = False

    def add_arguments(self, parser):
        parser.add_argument("--manifest", required=True)
        add_out_argument(parser)

    def run(self, out_dir, options):
        manifest = read_manifest(Path(options["manifest"]))
        if manifest.command == self.command_name:
            raise ConfigMismatch("a rerun manifest cannot be replayed again")
        if manifest.version != settings.SEATRACK_VERSION:
            logger.warning("manifest was written by version %s, running %s", manifest.version, settings.SEATRACK_VERSION)

        # 入力が変わっていたら同じ出力にはならないので実行しない
        for name, digest in manifest.inputs.items():
            path = Path(manifest.options[name])
            if sha256_file(path) != digest:
                raise ConfigMismatch(f"input {name} changed since the manifest was written: {path}")

        replay = dict(manifest.options)
        if "out" in replay:
            replay["out"] = str(out_dir)
        call_command(manifest.command, stdout=self.stdout, stderr=self.stderr, **replay)
        self.done(f"rerun done: command={manifest.command} out={out_dir}")
