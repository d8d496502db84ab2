"""
Three-pass mutual authentication (ISO/IEC 9798-2 style) between a reader and
the implant, with AES-128 encryption, AES-CMAC tags and per-step energy
accounting.

Frame layout, bit-exact::

    [1 B msg type][2 B payload length, big endian][payload][16 B CMAC tag]

    0x01 challenge      payload = nonce_R
                        tag = CMAC(zero key, header | payload)   (framing check only)
    0x02 imd-token      payload = AES-CTR(K, iv(0x02, nonce_R), nonce_R | nonce_I | imd_id)
                        tag = CMAC(K, header | payload | nonce_R)
    0x03 reader-confirm payload = AES-CTR(K, iv(0x03, nonce_I), nonce_I | reader_id)
                        tag = CMAC(K, header | payload | nonce_I)

``iv(t, n)`` is the nonce with its first byte XORed with the message type.
Binding every tag to the receiver's outstanding nonce is what makes a replayed
frame fail at tag verification.

Energy: each protocol step has a fixed cost. Before mutual authentication the
cost is paid from harvested energy (``power_source == "harvested"``); only a
mutually authenticated session may touch the battery.
"""

from __future__ import annotations

import enum
import hmac
import secrets
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .device import McuSpec, TransceiverSpec, step_energy
from .units import Energy

__all__ = [
    "MSG_CHALLENGE",
    "MSG_IMD_TOKEN",
    "MSG_READER_CONFIRM",
    "DEFAULT_E_AUTH",
    "Direction",
    "Phase",
    "ProtocolStep",
    "AuthProtocolSpec",
    "SessionState",
    "MalformedFrame",
    "ProtocolError",
    "STEP_ROLES",
    "default_steps",
    "default_protocol",
    "calibrate",
    "most_expensive_step",
    "advance",
    "encode_frame",
    "decode_frame",
    "cmac_tag",
    "ReaderSession",
    "Transcript",
    "run_handshake",
]

MSG_CHALLENGE = 0x01
MSG_IMD_TOKEN = 0x02
MSG_READER_CONFIRM = 0x03
HEADER_LEN = 3
TAG_LEN = 16
ID_LEN = 8
FRAMING_KEY = bytes(16)
DEFAULT_E_AUTH = 20.07e-6

NonceSource = Callable[[int], bytes]


class Direction(str, enum.Enum):
    TO_IMD = "reader->imd"
    FROM_IMD = "imd->reader"
    COMPUTE = "imd-compute"


class Phase(str, enum.Enum):
    IDLE = "idle"
    CHALLENGED = "challenged"
    READER_AUTHENTICATED = "reader-authenticated"
    MUTUALLY_AUTHENTICATED = "mutually-authenticated"
    FAILED = "failed"


# Fixed roles, in execution order. Costs are free to change, the roles are not.
STEP_ROLES = ("rx-challenge", "token-compute", "tx-token", "rx-confirm", "verify-tag", "decrypt-confirm")
RX_CHALLENGE, TOKEN_COMPUTE, TX_TOKEN, RX_CONFIRM, VERIFY_TAG, DECRYPT_CONFIRM = range(6)


class MalformedFrame(ValueError):
    pass


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolStep:
    name: str
    direction: Direction
    compute_cycles: float
    bytes_on_air: float
    energy: Energy

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "energy", Energy(self.energy))
        if self.direction is Direction.COMPUTE and self.bytes_on_air != 0:
            raise ValueError(f"compute step {self.name!r} cannot put bytes on air")
        if self.compute_cycles < 0 or self.bytes_on_air < 0:
            raise ValueError("step counts must be >= 0")


@dataclass(frozen=True)
class AuthProtocolSpec:
    steps: Tuple[ProtocolStep, ...]
    key: bytes
    nonce_length: int = 16
    imd_id: bytes = b"IMD-0001"
    reader_id: bytes = b"READER01"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if len(self.steps) < 3:
            raise ValueError("a mutual authentication needs at least three steps")
        if tuple(s.name for s in self.steps) != STEP_ROLES:
            raise ValueError(f"steps must be, in order: {', '.join(STEP_ROLES)}")
        if len(self.key) != 16:
            raise ValueError("key must be 128 bits")
        if len(self.imd_id) != ID_LEN or len(self.reader_id) != ID_LEN:
            raise ValueError(f"identities are {ID_LEN} bytes")
        if not 8 <= self.nonce_length <= 16:
            raise ValueError("nonce_length must be 8..16 bytes")

    @property
    def total_e_auth(self) -> Energy:
        return Energy(sum(s.energy for s in self.steps))

    @property
    def step_energies(self) -> List[float]:
        return [float(s.energy) for s in self.steps]

    def with_key(self, key: bytes) -> "AuthProtocolSpec":
        return replace(self, key=key)


def default_steps(mcu: McuSpec = McuSpec(), tx: TransceiverSpec = TransceiverSpec(),
                  token_cycles: float = 28_000, verify_cycles: float = 12_000,
                  decrypt_cycles: float = 8_000) -> Tuple[ProtocolStep, ...]:
    """Uncalibrated cost profile: receive 16 B, AES+CMAC, send 40 B, receive 24 B, verify."""
    tx_frac = tx.scheme.transmit_power_fraction
    layout = [
        ("rx-challenge", Direction.TO_IMD, 0.0, 16.0),
        ("token-compute", Direction.COMPUTE, token_cycles, 0.0),
        ("tx-token", Direction.FROM_IMD, 0.0, 40.0),
        ("rx-confirm", Direction.TO_IMD, 0.0, 24.0),
        ("verify-tag", Direction.COMPUTE, verify_cycles, 0.0),
        ("decrypt-confirm", Direction.COMPUTE, decrypt_cycles, 0.0),
    ]
    return tuple(
        ProtocolStep(name, d, cyc, nbytes,
                     step_energy(mcu, tx, cyc, nbytes, tx_frac if d is Direction.FROM_IMD else 1.0))
        for name, d, cyc, nbytes in layout)


def calibrate(spec: AuthProtocolSpec, target: float) -> AuthProtocolSpec:
    """Scale every step's cycles and bytes so the energies add up to ``target``."""
    if not target > 0:
        raise ValueError("target energy must be positive")
    total = float(spec.total_e_auth)
    if total == 0:
        raise ValueError("cannot calibrate an all-zero cost profile")
    k = float(target) / total
    steps = tuple(ProtocolStep(s.name, s.direction, s.compute_cycles * k, s.bytes_on_air * k, s.energy * k)
                  for s in spec.steps)
    return replace(spec, steps=steps)


def default_protocol(key: bytes = bytes(range(16)), e_auth: float = DEFAULT_E_AUTH,
                     mcu: McuSpec = McuSpec(), tx: TransceiverSpec = TransceiverSpec()) -> AuthProtocolSpec:
    return calibrate(AuthProtocolSpec(default_steps(mcu, tx), key), e_auth)


def most_expensive_step(spec: AuthProtocolSpec) -> Tuple[int, Energy]:
    best = 0
    for i, s in enumerate(spec.steps):
        if s.energy > spec.steps[best].energy:
            best = i
    return best, spec.steps[best].energy


# --- crypto and framing -----------------------------------------------------

def cmac_tag(key: bytes, data: bytes) -> bytes:
    c = cmac.CMAC(algorithms.AES(key))
    c.update(data)
    return c.finalize()


def _ctr(key: bytes, msg_type: int, nonce: bytes, data: bytes) -> bytes:
    iv = bytes([nonce[0] ^ msg_type]) + nonce[1:]
    iv = iv.ljust(16, b"\x00")
    enc = Cipher(algorithms.AES(key), modes.CTR(iv)).encryptor()
    return enc.update(data) + enc.finalize()


def encode_frame(msg_type: int, payload: bytes, key: bytes, binding: bytes = b"") -> bytes:
    if len(payload) > 0xFFFF:
        raise ValueError("payload too long")
    header = bytes([msg_type]) + len(payload).to_bytes(2, "big")
    return header + payload + cmac_tag(key, header + payload + binding)


class Frame(NamedTuple):
    msg_type: int
    payload: bytes
    tag: bytes

    @property
    def signed_part(self) -> bytes:
        return bytes([self.msg_type]) + len(self.payload).to_bytes(2, "big") + self.payload


def decode_frame(frame: bytes) -> Frame:
    if len(frame) < HEADER_LEN + TAG_LEN:
        raise MalformedFrame("frame shorter than header + tag")
    msg_type = frame[0]
    length = int.from_bytes(frame[1:3], "big")
    if len(frame) != HEADER_LEN + length + TAG_LEN:
        raise MalformedFrame(f"length field {length} does not match frame size {len(frame)}")
    return Frame(msg_type, bytes(frame[3:3 + length]), bytes(frame[3 + length:]))


def _tag_ok(key: bytes, frame: Frame, binding: bytes = b"") -> bool:
    return hmac.compare_digest(cmac_tag(key, frame.signed_part + binding), frame.tag)


# --- implant side -----------------------------------------------------------

@dataclass(frozen=True)
class SessionState:
    phase: Phase = Phase.IDLE
    imd_nonce: bytes = b""
    reader_nonce: bytes = b""
    steps_executed: Tuple[int, ...] = ()
    history: Tuple[Phase, ...] = (Phase.IDLE,)
    reader_verified: bool = False
    failure: str = ""

    @property
    def power_source(self) -> str:
        return "battery" if self.phase is Phase.MUTUALLY_AUTHENTICATED else "harvested"

    @property
    def terminal(self) -> bool:
        return self.phase in (Phase.FAILED, Phase.MUTUALLY_AUTHENTICATED)


def _go(session: SessionState, phase: Phase, steps: Sequence[int], **changes) -> SessionState:
    return replace(session, phase=phase, steps_executed=session.steps_executed + tuple(steps),
                   history=session.history + (phase,), **changes)


def advance(session: SessionState, message: bytes, spec: AuthProtocolSpec,
            nonce_source: Optional[NonceSource] = None) -> Tuple[SessionState, Optional[bytes], Energy]:
    """Feed one received frame to the implant.

    Returns the new state, the reply frame (if any) and the energy of the
    steps actually executed. A terminal session ignores further input.
    """
    if session.terminal:
        return session, None, Energy(0.0)
    costs = spec.step_energies
    n = spec.nonce_length

    def spent(steps):
        return Energy(sum(costs[i] for i in steps))

    if session.phase is Phase.IDLE:
        done = [RX_CHALLENGE]
        try:
            frame = decode_frame(message)
        except MalformedFrame as exc:
            return _go(session, Phase.FAILED, done, failure=str(exc)), None, spent(done)
        if frame.msg_type != MSG_CHALLENGE or len(frame.payload) != n or not _tag_ok(FRAMING_KEY, frame):
            return _go(session, Phase.FAILED, done, failure="bad challenge frame"), None, spent(done)
        reader_nonce = frame.payload
        imd_nonce = (nonce_source or secrets.token_bytes)(n)
        if len(imd_nonce) != n:
            raise ProtocolError("nonce source returned the wrong length")
        body = _ctr(spec.key, MSG_IMD_TOKEN, reader_nonce, reader_nonce + imd_nonce + spec.imd_id)
        reply = encode_frame(MSG_IMD_TOKEN, body, spec.key, binding=reader_nonce)
        done += [TOKEN_COMPUTE, TX_TOKEN]
        new = _go(session, Phase.CHALLENGED, done, imd_nonce=imd_nonce, reader_nonce=reader_nonce)
        return new, reply, spent(done)

    # CHALLENGED: waiting for the reader's confirmation
    done = [RX_CONFIRM]
    try:
        frame = decode_frame(message)
    except MalformedFrame as exc:
        return _go(session, Phase.FAILED, done, failure=str(exc)), None, spent(done)
    if frame.msg_type != MSG_READER_CONFIRM or len(frame.payload) != n + ID_LEN:
        return _go(session, Phase.FAILED, done, failure="unexpected frame"), None, spent(done)
    done.append(VERIFY_TAG)
    if not _tag_ok(spec.key, frame, binding=session.imd_nonce):
        return _go(session, Phase.FAILED, done, failure="confirm tag rejected"), None, spent(done)
    session = _go(session, Phase.READER_AUTHENTICATED, done)
    done2 = [DECRYPT_CONFIRM]
    plain = _ctr(spec.key, MSG_READER_CONFIRM, session.imd_nonce, frame.payload)
    echoed, reader_id = plain[:n], plain[n:]
    if not hmac.compare_digest(echoed, session.imd_nonce) or reader_id != spec.reader_id:
        return (_go(session, Phase.FAILED, done2, failure="stale or foreign confirm"), None,
                spent(done + done2))
    new = _go(session, Phase.MUTUALLY_AUTHENTICATED, done2, reader_verified=True)
    return new, None, spent(done + done2)


# --- reader side ------------------------------------------------------------

@dataclass
class ReaderSession:
    """The external programmer / base station half of the exchange."""

    key: bytes
    reader_id: bytes = b"READER01"
    expected_imd_id: bytes = b"IMD-0001"
    nonce_length: int = 16
    nonce_source: Optional[NonceSource] = None
    reader_nonce: bytes = b""
    imd_verified: bool = False
    failure: str = ""

    def challenge(self) -> bytes:
        self.reader_nonce = (self.nonce_source or secrets.token_bytes)(self.nonce_length)
        return encode_frame(MSG_CHALLENGE, self.reader_nonce, FRAMING_KEY)

    def receive_token(self, frame_bytes: bytes) -> Optional[bytes]:
        """Verify the implant's token; return the confirmation frame, or None."""
        n = self.nonce_length
        try:
            frame = decode_frame(frame_bytes)
        except MalformedFrame as exc:
            self.failure = str(exc)
            return None
        if frame.msg_type != MSG_IMD_TOKEN or len(frame.payload) != 2 * n + ID_LEN:
            self.failure = "unexpected frame"
            return None
        if not _tag_ok(self.key, frame, binding=self.reader_nonce):
            self.failure = "token tag rejected"
            return None
        plain = _ctr(self.key, MSG_IMD_TOKEN, self.reader_nonce, frame.payload)
        if plain[:n] != self.reader_nonce or plain[2 * n:] != self.expected_imd_id:
            self.failure = "token does not echo our nonce"
            return None
        self.imd_verified = True
        return self.confirm_for(plain[n:2 * n])

    def confirm_for(self, imd_nonce: bytes) -> bytes:
        body = _ctr(self.key, MSG_READER_CONFIRM, imd_nonce, imd_nonce + self.reader_id)
        return encode_frame(MSG_READER_CONFIRM, body, self.key, binding=imd_nonce)


@dataclass
class Transcript:
    frames: List[Tuple[str, bytes]] = field(default_factory=list)
    session: SessionState = field(default_factory=SessionState)
    energy: float = 0.0
    step_energy_log: List[float] = field(default_factory=list)
    imd_verified: bool = False

    @property
    def success(self) -> bool:
        return self.session.phase is Phase.MUTUALLY_AUTHENTICATED


def run_handshake(spec: AuthProtocolSpec, reader: ReaderSession,
                  nonce_source: Optional[NonceSource] = None, insist: bool = False) -> Transcript:
    """Play a full exchange between ``reader`` and a fresh implant session.

    With ``insist`` the reader sends a confirmation even when the implant's
    token failed its own checks, which is what a battery-DoS attacker does.
    """
    t = Transcript()
    challenge = reader.challenge()
    t.frames.append(("reader", challenge))
    session, reply, e = advance(t.session, challenge, spec, nonce_source)
    t.session, t.energy = session, t.energy + e
    t.step_energy_log.append(float(e))
    if reply is None:
        return t
    t.frames.append(("imd", reply))
    confirm = reader.receive_token(reply)
    t.imd_verified = reader.imd_verified
    if confirm is None:
        if not insist:
            return t
        confirm = reader.confirm_for(reader.reader_nonce)
    t.frames.append(("reader", confirm))
    session, _, e = advance(t.session, confirm, spec, nonce_source)
    t.session, t.energy = session, t.energy + e
    t.step_energy_log.append(float(e))
    return t
