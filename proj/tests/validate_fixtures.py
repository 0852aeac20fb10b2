"""Validate every problem fixture against the shipped JSON schema."""
import json
import pathlib
import sys

import jsonschema

schema = json.loads(pathlib.Path(sys.argv[1]).read_text())
validator = jsonschema.Draft202012Validator(schema)
bad = 0
for path in sorted(pathlib.Path(sys.argv[2]).glob("*.json")):
    errors = list(validator.iter_errors(json.loads(path.read_text())))
    for e in errors:
        print(f"{path.name}: {e.message}")
    bad += bool(errors)
    print(f"{path.name}: {'invalid' if errors else 'ok'}")
sys.exit(1 if bad else 0)
