# Copyright 2026 senscen authors
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


class SenscenError(Exception):
    pass


class SpaceError(SenscenError):
    """A scenario or assignment does not fit its parameter space"""


class ConfigError(SenscenError):
    pass


class FeasibilityError(SenscenError):
    """Requested joint distribution does not exist (e.g. Frechet bounds)"""


class SimulationError(SenscenError):
    def __init__(self, message, scenario_index=None):
        if scenario_index is not None:
            message = f"scenario {scenario_index}: {message}"
        super().__init__(message)
        self.scenario_index = scenario_index


class TrainingError(SenscenError):
    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch


class ValidationGateError(SenscenError):
    """Surrogate validation R^2 fell below the configured gate"""

    def __init__(self, r2, gate):
        r2_text = ", ".join(f"{v:.4f}" for v in r2)
        super().__init__(f"validation R^2 [{r2_text}] below gate {gate}")
        self.r2 = list(r2)
        self.gate = gate


class BudgetError(SenscenError):
    pass
