# Copyright 2026 The GTNB Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Genre-conditioned music-to-dance generation."""

import sys

from gtnb._core import (
    GENRES,
    MUSIC_WIDTH,
    POSE_WIDTH,
    CorruptionError,
    EmptyInputError,
    Error,
    FormatError,
    IoError,
    NumericError,
    ShapeError,
    StageMismatchError,
    UnsupportedVersionError,
    beat_align_score,
    cli,
    detect_motion_beats,
    diversity,
    evaluate_suite,
    extract_features,
    fid,
    geometric_features,
    kinetic_features,
    load_audio,
    load_checkpoint,
    make_synthetic_corpus,
    read_pose_csv,
    run_cli,
    write_pose_csv,
)

__version__ = "0.1.0"


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
