import json

import jsonschema
import numpy as np
import pytest

from symloss import schemas
from symloss.cli import main
from symloss.experiment import ROBUSTNESS_PROTOCOL, robustness_comparison
from symloss.losses import cross_entropy
from symloss.verify import check_symmetry


def _validate(doc):
    schema = schemas.ALL[doc["schema"]]
    jsonschema.Draft202012Validator.check_schema(schema)
    jsonschema.validate(doc, schema, cls=jsonschema.Draft202012Validator)


def test_every_schema_is_well_formed():
    for version, schema in schemas.ALL.items():
        jsonschema.Draft202012Validator.check_schema(schema)
        assert version.startswith("symloss.") and version.endswith("/1")


def test_check_report():
    rep = check_symmetry(cross_entropy(4), probes=50, seed=0)
    _validate(rep.to_record())


@pytest.mark.parametrize("loss", ["unhinged", "ce"])
def test_symcheck(capsys, loss):
    main(["symcheck", "--loss", loss, "--classes", "4", "--probes", "50",
          "--checks", "symmetry,permutation,gradient,non_increasing,local_unhinged"])
    doc = json.loads(capsys.readouterr().out)
    _validate(doc)
    for rep in doc["reports"]:
        _validate(rep)


@pytest.mark.parametrize("epochs", [0, 2])
def test_train_record(tmp_path, epochs):
    cfg = tmp_path / "t.cfg"
    cfg.write_text(f"total epoch = {epochs}\ndataset.per_class = 10\nmodel.hidden = 3\n")
    main(["train", str(cfg)])
    _validate(json.loads((tmp_path / "t.record.json").read_text()))


def test_aborted_train_record(tmp_path):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("total epoch = 2\ndataset.per_class = 10\nlearning rate = 1e300\nmomentum = 0\n")
    with np.errstate(all="ignore"):
        main(["train", str(cfg)])
    _validate(json.loads((tmp_path / "t.record.json").read_text()))


def test_centroid(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("f0,f1,label\n1,0,0\n0,1,1\n2,2,2\n")
    main(["centroid", str(data), "--bias"])
    _validate(json.loads(capsys.readouterr().out))


@pytest.mark.parametrize("extra", [[], ["--loss-kind", "clipped", "--delta", "0.5", "--density", "gaussian:0:1"]])
def test_regress(tmp_path, capsys, extra):
    data = tmp_path / "r.csv"
    data.write_text("f0,f1,target\n1,2,0.5\n-1,0,2\n")
    main(["regress", str(data), *extra])
    _validate(json.loads(capsys.readouterr().out))


def test_robustness_small_protocol():
    proto = dict(ROBUSTNESS_PROTOCOL, seeds=(0,), train=dict(ROBUSTNESS_PROTOCOL["train"], epochs=1),
                 dataset=dict(ROBUSTNESS_PROTOCOL["dataset"], per_class=20, test_count=20))
    _validate(robustness_comparison(proto))


def test_schema_rejects_wrong_version():
    doc = {"schema": "symloss.centroid/2"}
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(doc, schemas.CENTROID_RESULT)
