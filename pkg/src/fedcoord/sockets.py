"""Localhost TCP transport: coordinator server plus one thread per federate.

Every federate keeps one connection to the coordinator; registration
advertises the federate's own listen port, and the start grant's payload
carries the full (federate id, port) table so peers can dial each other
directly for decentralized and physical traffic. All sockets set
TCP_NODELAY; the per-message round trips of the grant protocol are the
whole point of the measurement.

Threading: each federate runs its state machine on one thread; reader
threads push decoded frames onto that thread's queue. The coordinator has
an accept thread, a reader thread per connection, and one dispatch thread
that owns all protocol state.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time

from fedcoord.exceptions import ProtocolError
from fedcoord.rti import Rti
from fedcoord.runtime import Federate
from fedcoord.topology import FederationGraph
from fedcoord.wire import RTI_ID, MsgType, StreamDecoder, WireMessage, encode

_PEER_ENTRY = struct.Struct("<HH")  # federate id, listen port
_PORT = struct.Struct("<H")


def _new_socket() -> socket.socket:
    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return s


def _send_frame(sock: socket.socket, lock: threading.Lock, msg: WireMessage) -> None:
    data = encode(msg)
    try:
        with lock:
            sock.sendall(data)
    except OSError:
        pass  # receiver tore down already; frames to the dead are dropped


class RtiServer:
    """Accepts federate connections and drives a coordinator instance."""

    def __init__(
        self,
        graph: FederationGraph,
        coordination: str,
        *,
        host: str = "127.0.0.1",
        port: int = 0,
        margin: int | None = None,
        log=None,
    ):
        self.rti = Rti(
            graph,
            coordination,
            margin_override=margin,
            log=log,
            peer_payload=self._peer_payload,
        )
        self.rti.bind_transport(self._send)
        self._listener = _new_socket()
        self._listener.bind((host, port))
        self._listener.listen(graph.n + 4)
        self.address = self._listener.getsockname()
        self._q: queue.Queue = queue.Queue()
        self._conns: dict[int, tuple[socket.socket, threading.Lock]] = {}
        self._ports: dict[int, int] = {}
        self._threads: list[threading.Thread] = []
        self._closed = False

    def start(self) -> None:
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        d = threading.Thread(target=self._dispatch_loop, daemon=True)
        d.start()
        self._threads.append(d)

    def _peer_payload(self, _fid: int) -> bytes:
        return b"".join(
            _PEER_ENTRY.pack(f, p) for f, p in sorted(self._ports.items())
        )

    def _send(self, dst: int, msg: WireMessage) -> None:
        conn = self._conns.get(dst)
        if conn is not None:
            _send_frame(conn[0], conn[1], msg)

    def _accept_loop(self) -> None:
        while True:
            try:
                sock, _addr = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            t = threading.Thread(target=self._read_loop, args=(sock,), daemon=True)
            t.start()
            self._threads.append(t)

    def _read_loop(self, sock: socket.socket) -> None:
        decoder = StreamDecoder()
        lock = threading.Lock()
        try:
            while True:
                data = sock.recv(65536)
                if not data:
                    return
                for msg in decoder.feed(data):
                    if msg.type == MsgType.REGISTER:
                        self._conns[msg.src] = (sock, lock)
                        if len(msg.payload) >= _PORT.size:
                            self._ports[msg.src] = _PORT.unpack_from(msg.payload)[0]
                    self._q.put(msg)
        except OSError:
            return

    def _dispatch_loop(self) -> None:
        while not self.rti.done:
            try:
                msg = self._q.get(timeout=0.25)
            except queue.Empty:
                continue
            self.rti.on_frame(msg, time.monotonic_ns())
        # give the final grants a moment on the wire before teardown
        time.sleep(0.05)
        self.close()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._listener.close()
        except OSError:
            pass
        for sock, _lock in self._conns.values():
            try:
                sock.close()
            except OSError:
                pass


class FederateRunner:
    """Owns one federate: sockets in, state machine on a dedicated thread."""

    def __init__(
        self,
        fed_factory,
        rti_address: tuple[str, int],
        *,
        host: str = "127.0.0.1",
    ):
        self._listener = _new_socket()
        self._listener.bind((host, 0))
        self._listener.listen(8)
        self.listen_port = self._listener.getsockname()[1]
        self.fed: Federate = fed_factory(_PORT.pack(self.listen_port))
        self.fed.bind_transport(self._send)
        self._rti_address = rti_address
        self._host = host
        self._q: queue.Queue = queue.Queue()
        self._rti_conn: tuple[socket.socket, threading.Lock] | None = None
        self._peers: dict[int, tuple[socket.socket, threading.Lock]] = {}
        self._peer_ports: dict[int, int] = {}
        self._threads: list[threading.Thread] = []
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.error: BaseException | None = None

    def start(self) -> None:
        self.thread.start()

    def _connect_rti(self) -> None:
        sock = _new_socket()
        sock.connect(self._rti_address)
        self._rti_conn = (sock, threading.Lock())
        self._start_reader(sock)

    def _start_reader(self, sock: socket.socket) -> None:
        t = threading.Thread(target=self._read_loop, args=(sock,), daemon=True)
        t.start()
        self._threads.append(t)

    def _read_loop(self, sock: socket.socket) -> None:
        decoder = StreamDecoder()
        try:
            while True:
                data = sock.recv(65536)
                if not data:
                    return
                for msg in decoder.feed(data):
                    self._q.put(msg)
        except OSError:
            return

    def _accept_loop(self) -> None:
        while True:
            try:
                sock, _addr = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._start_reader(sock)

    def _send(self, dst: int, msg: WireMessage) -> None:
        if dst == RTI_ID:
            conn = self._rti_conn
        else:
            conn = self._peers.get(dst)
            if conn is None:
                port = self._peer_ports.get(dst)
                if port is None:
                    raise ProtocolError(f"no route to federate {dst}")
                sock = _new_socket()
                sock.connect((self._host, port))
                conn = (sock, threading.Lock())
                self._peers[dst] = conn
        if conn is not None:
            _send_frame(conn[0], conn[1], msg)

    def _run(self) -> None:
        try:
            t = threading.Thread(target=self._accept_loop, daemon=True)
            t.start()
            self._threads.append(t)
            self._connect_rti()
            fed = self.fed
            while not fed.done:
                wake = fed.poll(time.monotonic_ns())
                if fed.done:
                    break  # the poll itself crossed the finish line
                timeout = None
                if wake is not None:
                    timeout = max(0, wake - time.monotonic_ns()) / 1e9
                try:
                    msg = self._q.get(timeout=timeout)
                except queue.Empty:
                    continue
                self._handle(msg)
                while True:
                    try:
                        msg = self._q.get_nowait()
                    except queue.Empty:
                        break
                    self._handle(msg)
        except BaseException as e:  # surfaced to the caller at join time
            self.error = e
        finally:
            self.close()

    def _handle(self, msg: WireMessage) -> None:
        if msg.type == MsgType.START_GRANT and msg.payload:
            for off in range(0, len(msg.payload), _PEER_ENTRY.size):
                f, p = _PEER_ENTRY.unpack_from(msg.payload, off)
                if f != self.fed.fid:
                    self._peer_ports[f] = p
        self.fed.on_frame(msg, time.monotonic_ns())

    def close(self) -> None:
        try:
            self._listener.close()
        except OSError:
            pass
        for sock, _lock in list(self._peers.values()):
            try:
                sock.close()
            except OSError:
                pass
        if self._rti_conn is not None:
            try:
                self._rti_conn[0].close()
            except OSError:
                pass


def run_federation_threads(
    graph: FederationGraph,
    builders: dict[int, object],
    *,
    coordination: str,
    stp_offset: int = 0,
    chase_physical: bool = False,
    margin: int | None = None,
    timeout: float = 120.0,
    log=None,
) -> list[Federate]:
    """Run a whole federation over localhost sockets; returns the federates
    once every thread has finished."""
    server = RtiServer(graph, coordination, margin=margin, log=log)
    server.start()
    runners = []
    for i in range(graph.n):
        def factory(payload, i=i):
            fed = Federate(
                i,
                graph,
                coordination,
                stp_offset=stp_offset,
                chase_physical=chase_physical,
                live_clock=time.monotonic_ns,
                register_payload=payload,
            )
            builders[i](fed)
            return fed

        runners.append(FederateRunner(factory, server.address))
    for r in runners:
        r.start()
    deadline = time.monotonic() + timeout
    for r in runners:
        r.thread.join(max(0.1, deadline - time.monotonic()))
    server.close()
    for r in runners:
        if r.error is not None:
            raise r.error
        if r.thread.is_alive():
            raise ProtocolError(f"federate {r.fed.name} did not finish in time")
    return [r.fed for r in runners]
