# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json

import numpy as np
from oslo_serialization import jsonutils


class Serializable(object):
    """A record fully described by its ``serializable_fields``."""

    serializable_fields = ()

    def serialize(self):
        return {name: getattr(self, name)
                for name in self.serializable_fields}


class SerializableComparable(Serializable):
    """A record compared through its serialized fields.

    Records may be updated after creation, so they are not hashable.
    """

    __hash__ = None

    def __eq__(self, other):
        if not isinstance(other, Serializable):
            return NotImplemented
        return self.serialize() == other.serialize()


class ResultJSONEncoder(json.JSONEncoder):
    """Encodes result records, errors and numpy values."""

    def encode(self, o):
        text = super(ResultJSONEncoder, self).encode(o)
        # indented output goes to sidecar files, which end with a newline
        return text if self.indent is None else text + '\n'

    def default(self, o):
        if isinstance(o, Serializable):
            return o.serialize()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        return jsonutils.to_primitive(o, convert_instances=True)


def dumps(obj, indent=None):
    """JSON text with sorted keys, so equal inputs give equal bytes."""
    return json.dumps(obj, cls=ResultJSONEncoder, indent=indent,
                      sort_keys=True)
