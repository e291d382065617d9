#!/usr/bin/env python
# coding: utf8
#
# Copyright (c) 2022 fixnoise contributors.
#
# This file is part of fixnoise.
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
#
"""
Exceptions raised by fixnoise.

Every error derives from FixnoiseError so that the command line can map
a failure family onto its exit code.
"""


class FixnoiseError(Exception):
    """Base class of fixnoise errors"""


class DimensionError(FixnoiseError, ValueError):
    """Shapes or extents do not agree"""


class ContractError(FixnoiseError, ValueError):
    """A precondition of an operation is violated"""


class DegenerateInputError(FixnoiseError, ValueError):
    """Input for which the computation is undefined (zero latent...)"""


class ConfigurationError(FixnoiseError):
    """Invalid configuration or incompatible models"""


class NumericalError(FixnoiseError):
    """
    Non finite values met during training or metric computation.

    :param message: error description
    :param snapshot_path: diagnostic checkpoint written before aborting
    """

    def __init__(self, message: str, snapshot_path: str = None):
        super().__init__(message)
        self.snapshot_path = snapshot_path


class FormatError(FixnoiseError):
    """File does not follow the expected format"""


class CorruptionError(FixnoiseError):
    """File is truncated or does not match its recorded hash"""
