"""Prover and scorer in separate roles, talking JSON lines over TCP.

Run: python demos/scoring_service.py
"""

import json
import socket

from kbc_abduction.abduction import CandidatePair, KbcScorer
from kbc_abduction.complex_model import planted_params
from kbc_abduction.kgraph import NamedTriplet, Vocabulary
from kbc_abduction.prover import RteProblem, decide, parse_formula
from kbc_abduction.service import RemoteScorer, start_server

vocab = Vocabulary(["child", "hike", "man", "parent", "walk"])
facts = [NamedTriplet("hike", "hypernym", "walk"), NamedTriplet("parent", "antonym", "child")]
params = planted_params(vocab, [vocab.encode(t) for t in facts])

server = start_server(KbcScorer(params))  # port 0 picks a free port
print("serving on", server.endpoint)

# The raw protocol: one request per line, one response per line.
host, port = server.server_address[:2]
with socket.create_connection((host, port)) as conn:
    conn.sendall(b'{"id":1,"pairs":[["hike","walk"]]}\n{"id":2,"pairs":[]}\n')
    replies = conn.makefile("rb")
    for _ in range(2):
        print("<-", json.loads(replies.readline()))

# The client class plugs into the prover like any local scorer.
with RemoteScorer(server.endpoint) as remote:
    print("candidates:", remote.candidates([CandidatePair("parent", "child")], 0.4))
    problems = [
        RteProblem("walk", [parse_formula("exists e x. man(x) & hike(e) & subj(e,x)")],
                   parse_formula("exists e x. man(x) & walk(e) & subj(e,x)")),
        RteProblem("child", [parse_formula("exists x. parent(x)")],
                   parse_formula("exists x. child(x)")),
    ]
    for p in problems:
        print(p.id, "->", decide(p, remote))

server.stop()
