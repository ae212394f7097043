"""Multi-persona FMEA table generation.

A panel of role-specialized LLM personas answers reliability questions about
an industrial asset across four prompting rounds (zero-shot, in-context,
chain-of-interaction, few-shot), with lexical routing, a usefulness/self-BLEU
quality gate, append-only JSON-lines banks, and an SME review loop exposed
over REST and a CLI.
"""

__version__ = "0.1.0"
