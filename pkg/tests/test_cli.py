import json

import pytest

from modsess.cli import main
from modsess.fixtures import corpus_path


def path(name):
    return str(corpus_path(name))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check(capsys):
    code, out, _ = run(capsys, "check", path("election"))
    assert code == 0
    assert out.splitlines()[1:] == ["  global_types: none", "  partitions: coarse", "  processes: 7", "  sessions: E"]


def test_simulate_election_to_the_end(capsys):
    trace = "a-leader->e · d-leader->c · c-leader->e · e-elect->s · s-del->b"
    code, out, _ = run(capsys, "simulate", path("election"), "E", "--trace", trace)
    assert code == 0
    assert out == "simulate E: ok\n  enabled: \n  state: empty\n  steps: 5\n"


def test_simulate_rejects_disabled_label(capsys):
    code, out, _ = run(capsys, "simulate", path("election"), "E", "--trace", "a-leader->e;a-leader->e",
                       "--format", "machine")
    assert code == 1
    rec = json.loads(out)
    assert rec["result"] == "fail"
    assert rec["counterexample"]["trace"] == "a-leader->e"
    assert rec["detail"] == {"reason": "label a-leader->e is not enabled"}


def test_modularise(capsys):
    code, out, _ = run(capsys, "modularise", path("modular_election"), "Egl", "--partition", "modules")
    assert code == 0
    assert "  connectors: gs, s1, s2, s3\n" in out
    code, out, _ = run(capsys, "modularise", path("composition"), "MPAI2", "--partition", "rings")
    assert code == 1
    assert "  reason: p: talks to t outside its module without being a connector\n" in out


def test_typecheck(capsys):
    code, out, _ = run(capsys, "typecheck", path("sequencing"), "MSEQ")
    assert code == 0
    assert out == (
        "typecheck MSEQ: typable\n"
        "  partition: {{p, q, r}}\n"
        "  states: 4\n"
        "  type: gdef G = p->q:l.p->r:l + r->p:l'.(p->q:l1 + q->p:l2)\n"
    )
    code, out, _ = run(capsys, "typecheck", path("negatives"), "MSINGLE", "--partition", "single")
    assert code == 1
    assert "  reason: empty coherent set\n" in out


def test_lockfree_machine_record(capsys):
    code, out, _ = run(capsys, "lockfree", path("negatives"), "M0", "--format", "machine")
    assert code == 1
    assert out == (
        '{"command": "lockfree", "counterexample": {"participant": "r", "state": "{r|>p?l\'}", '
        '"trace": "p-l->q"}, "detail": {"edges": 3, "reason": "r can never communicate again", '
        '"states": 4}, "result": "locked", "subject": "M0"}\n'
    )


def test_machine_output_is_stable(capsys):
    outs = [run(capsys, "meta", path("connectors"), "MCONN", "--partition", "modules", "--format", "machine")
            for _ in range(2)]
    assert outs[0] == outs[1]
    code, out, _ = outs[0]
    assert code == 1
    rec = json.loads(out)
    assert rec["counterexample"]["theorem"] == "coherence preservation"
    assert rec["detail"]["subject reduction"].startswith("fail")
    assert rec["detail"]["label independence"].startswith("pass")


def test_gt_step(capsys):
    code, out, _ = run(capsys, "gt-step", path("interleaving"), "G", "p-l->q")
    assert (code, out) == (0, "gt-step G: ok\n  steps: 1\n  type: gdef G = r->s:l1.G + r->s:l2\n")
    code, out, _ = run(capsys, "gt-step", path("interleaving"), "Grej", "p-l->q")
    assert code == 1
    assert "  reason: no transition: p-l->q cannot fire: not a capability below r-l'->s\n" in out


def test_meta_passes_on_election(capsys):
    code, out, _ = run(capsys, "meta", path("election"), "E", "--partition", "coarse")
    assert code == 0
    assert out.startswith("meta E: pass\n")


def test_export(capsys, tmp_path):
    code, out, _ = run(capsys, "export", path("interleaving"), "Gp")
    assert code == 0 and out.startswith('digraph "Gp" {')
    target = tmp_path / "mseq.dot"
    code, out, _ = run(capsys, "export", path("sequencing"), "MSEQ", "--typed", "-o", str(target))
    assert (code, out) == (0, "")
    assert target.read_text().count(" -> ") == 5
    code, _, err = run(capsys, "export", path("negatives"), "M0", "--typed")
    assert code == 2 and "untypable" in err


@pytest.mark.parametrize(
    "argv, message",
    [
        (["typecheck", path("connectors"), "NOPE"], "error: unknown session NOPE"),
        (["typecheck", path("connectors"), "MCONN", "--partition", "nope"], "error: unknown partition nope"),
        (["gt-step", path("interleaving"), "G", "bad"], "error: malformed label 'bad', expected p-msg->q"),
        (["lockfree", path("election"), "E", "--state-budget", "3"],
         "error: budget exceeded: more than 3 reachable states"),
        (["modularise", path("connectors"), "MCONN", "--partition", "{{u}}"], "error: unknown partition {{u}}"),
        (["simulate", path("election"), "E", "--trace", "a-b"], "error: malformed trace"),
    ],
)
def test_usage_errors(capsys, argv, message):
    code, out, err = run(capsys, *argv)
    assert code == 2 and out == ""
    assert err.startswith(message)


def test_missing_file_and_bad_command(capsys, tmp_path):
    code, _, err = run(capsys, "lockfree", str(tmp_path / "none.sess"), "M0")
    assert code == 2 and err.startswith("error: ")
    code, _, err = run(capsys, "frobnicate")
    assert code == 2 and "invalid choice: 'frobnicate'" in err
    bad = tmp_path / "bad.sess"
    bad.write_text("session S = p |> q!l +")
    code, _, err = run(capsys, "check", str(bad))
    assert (code, err) == (2, "error: line 1, column 23: expected a process, found 'end of input'\n")
