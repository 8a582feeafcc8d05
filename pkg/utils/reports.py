"""Schema-checked JSON artifacts and CSV tables."""
import csv
import hashlib
import json

from jsonschema import validate

from metrics_schema import definition


def dumps(payload):
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + '\n'


def write_json(path, payload, schema=None):
    if schema is not None:
        validate(instance=payload, schema=definition(schema))
    with open(path, 'w') as fh:
        fh.write(dumps(payload))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_jsonl(path, records, schema=None):
    """Rewrite the whole log so re-runs produce identical bytes."""
    with open(path, 'w') as fh:
        for record in records:
            if schema is not None:
                validate(instance=record, schema=definition(schema))
            fh.write(json.dumps(record, sort_keys=True, allow_nan=False) + '\n')


def write_csv(path, header, rows):
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def file_digest(paths):
    digest = hashlib.sha256()
    for path in paths:
        with open(path, 'rb') as fh:
            digest.update(fh.read())
    return digest.hexdigest()
