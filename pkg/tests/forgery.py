"""Randomized forged and replayed transcripts fed to the implant's state machine."""

import random

from zpdsim.protocol import (ID_LEN, MSG_READER_CONFIRM, Phase, ReaderSession, SessionState, advance,
                             encode_frame)

KINDS = ("random", "bitflip", "replay", "wrong-key", "echo-token", "reflect")


def forged_confirm(kind: str, rng: random.Random, spec, token: bytes, imd_nonce: bytes, previous: bytes) -> bytes:
    n = spec.nonce_length
    if kind == "random":
        payload = rng.randbytes(n + ID_LEN)
        return bytes([MSG_READER_CONFIRM]) + len(payload).to_bytes(2, "big") + payload + rng.randbytes(16)
    if kind == "bitflip":
        genuine = ReaderSession(spec.key).confirm_for(imd_nonce)
        pos = rng.randrange(len(genuine))
        return genuine[:pos] + bytes([genuine[pos] ^ (1 << rng.randrange(8))]) + genuine[pos + 1:]
    if kind == "replay":
        return previous
    if kind == "wrong-key":
        key = rng.randbytes(16)
        while key == spec.key:
            key = rng.randbytes(16)
        return ReaderSession(key).confirm_for(imd_nonce)
    if kind == "echo-token":
        # resend the implant's own token re-labelled as a confirmation
        body = token[3:-16][:n + ID_LEN]
        return encode_frame(MSG_READER_CONFIRM, body, rng.randbytes(16), binding=imd_nonce)
    if kind == "reflect":
        # a confirm computed for some other implant nonce (e.g. a parallel session)
        other = rng.randbytes(n)
        while other == imd_nonce:
            other = rng.randbytes(n)
        return ReaderSession(spec.key).confirm_for(other)
    raise ValueError(kind)


def run_forgeries(spec, trials: int, seed: int):
    """Returns (acceptances, per-kind counts, example genuine transcript phase history)."""
    rng = random.Random(seed)
    reader_rng = random.Random(seed + 1)
    # one genuine run supplies the confirm frame that later gets replayed
    honest = ReaderSession(spec.key, nonce_source=reader_rng.randbytes)
    s, token, _ = advance(SessionState(), honest.challenge(), spec, rng.randbytes)
    previous = honest.receive_token(token)
    s, _, _ = advance(s, previous, spec, rng.randbytes)
    assert s.phase is Phase.MUTUALLY_AUTHENTICATED
    accepted = 0
    counts = dict.fromkeys(KINDS, 0)
    for i in range(trials):
        kind = KINDS[i % len(KINDS)]
        reader = ReaderSession(spec.key, nonce_source=reader_rng.randbytes)
        session, token, _ = advance(SessionState(), reader.challenge(), spec, rng.randbytes)
        frame = forged_confirm(kind, rng, spec, token, session.imd_nonce, previous)
        session, _, _ = advance(session, frame, spec, rng.randbytes)
        counts[kind] += 1
        if session.phase is Phase.MUTUALLY_AUTHENTICATED:
            accepted += 1
    return accepted, counts
