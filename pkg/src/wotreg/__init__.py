"""Decentralized web-of-trust registry for verifiable credentials.

A simulated distributed ledger hosts two append-only graphs: a web of trust
made of signed legitimacy statements between DIDs, and a transformation graph
whose edges point at content-addressed JSON templates. Verifiers authenticate
credential issuers through trust paths, score their legitimacy against a local
policy, and transform credentials between JSON schemas through authenticated
template chains.
"""

__version__ = "0.1.0"
