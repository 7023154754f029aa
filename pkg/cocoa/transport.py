import socket
import struct
import threading
import time
from abc import ABC, abstractmethod
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from cocoa.worker import Worker
from models.errors import ProtocolError, TransportError

MAGIC = 0xC0C0A000
HEADER = struct.Struct("<IIIQ")
HEADER_SIZE = HEADER.size
STOP_ROUND = 0xFFFFFFFF
PAYLOAD_DTYPE = np.dtype("<f8")


def frame_size(length: int) -> int:
    """Размер кадра с полезной нагрузкой из length чисел f64"""
    return HEADER_SIZE + PAYLOAD_DTYPE.itemsize * length


class Transport(ABC):
    """
    Сторона координатора: доставка v машинам и сбор Δv_k

    Раунд: collect_updates → (gather_alpha, если нужна проверка зазора) → publish.
    """

    K: int = 0

    @abstractmethod
    def start(self, v: np.ndarray) -> List[np.ndarray]:
        """Запускает машины с v⁰ и возвращает их начальные блоки α_[k]"""

    @abstractmethod
    def collect_updates(self, round_index: int) -> Tuple[List[np.ndarray], int]:
        """Δv_k по возрастанию k и суммарное число внутренних итераций раунда"""

    @abstractmethod
    def gather_alpha(self, round_index: int) -> List[np.ndarray]:
        """Текущие блоки α_[k] по возрастанию k"""

    @abstractmethod
    def publish(self, v: np.ndarray, round_index: int) -> None:
        """Рассылает v^t всем машинам"""

    @abstractmethod
    def close(self) -> None:
        pass

    def __enter__(self) -> "Transport":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class InProcessTransport(Transport):
    """Машины-потоки; обмен через общий барьер и заранее выделенные буферы K×d"""

    def __init__(self, workers: List[Worker], d: int):
        self.workers = workers
        self.K = len(workers)
        self._buffers = np.zeros((self.K, d))
        self._iterations = np.zeros(self.K, dtype=np.int64)
        self._errors: List[Optional[BaseException]] = [None] * self.K
        self._v: Optional[np.ndarray] = None
        self._round = 0
        self._stop = False
        self._begin = threading.Barrier(self.K + 1)
        self._end = threading.Barrier(self.K + 1)
        self._threads: List[threading.Thread] = []

    def _loop(self, k: int) -> None:
        while True:
            self._begin.wait()
            if self._stop:
                return
            try:
                update = self.workers[k].step(self._v, self._round)
                self._buffers[k] = update.delta_v
                self._iterations[k] = update.local_iters
            except Exception as e:
                self._errors[k] = e
            self._end.wait()

    def start(self, v):
        self._v = v
        self._threads = [
            threading.Thread(target=self._loop, args=(k,), name=f"cocoa-worker-{k}", daemon=True)
            for k in range(self.K)
        ]
        for thread in self._threads:
            thread.start()
        logger.debug(f"Запущено {self.K} потоков-машин")
        return [worker.alpha_local.copy() for worker in self.workers]

    def collect_updates(self, round_index):
        self._round = round_index
        self._begin.wait()
        self._end.wait()
        for k, error in enumerate(self._errors):
            if error is not None:
                self._errors[k] = None
                raise error
        return [self._buffers[k].copy() for k in range(self.K)], int(self._iterations.sum())

    def gather_alpha(self, round_index):
        return [worker.alpha_local.copy() for worker in self.workers]

    def publish(self, v, round_index):
        self._v = v

    def close(self):
        if not self._threads:
            return
        self._stop = True
        try:
            self._begin.wait(timeout=5.0)
        except threading.BrokenBarrierError:
            logger.warning("Барьер потоков-машин разрушен при остановке")
        for thread in self._threads:
            thread.join(timeout=5.0)
        self._threads = []


def _recv_exact(sock: socket.socket, size: int, round_index: int) -> bytes:
    chunks = bytearray()
    while len(chunks) < size:
        try:
            chunk = sock.recv(size - len(chunks))
        except OSError as e:
            raise TransportError(f"Ошибка чтения сокета: {e}", round_index) from e
        if not chunk:
            raise TransportError("Соединение закрыто удаленной стороной", round_index)
        chunks.extend(chunk)
    return bytes(chunks)


def send_frame(sock: socket.socket, round_index: int, machine: int, payload: Optional[np.ndarray] = None) -> int:
    """Отправляет кадр и возвращает число отправленных байт"""
    body = b"" if payload is None else np.ascontiguousarray(payload, dtype=PAYLOAD_DTYPE).tobytes()
    data = HEADER.pack(MAGIC, round_index, machine, len(body)) + body
    try:
        sock.sendall(data)
    except OSError as e:
        raise TransportError(f"Ошибка отправки кадра: {e}", round_index) from e
    return len(data)


def recv_frame(sock: socket.socket, expected_round: int) -> Tuple[int, int, np.ndarray]:
    """Читает кадр (round, machine, payload); неверная сигнатура дает ProtocolError"""
    magic, round_index, machine, length = HEADER.unpack(_recv_exact(sock, HEADER_SIZE, expected_round))
    if magic != MAGIC:
        raise ProtocolError(f"Неверная сигнатура кадра 0x{magic:08X}")
    if length % PAYLOAD_DTYPE.itemsize:
        raise ProtocolError(f"Длина полезной нагрузки {length} не кратна 8")
    body = _recv_exact(sock, length, expected_round) if length else b""
    return round_index, machine, np.frombuffer(body, dtype=PAYLOAD_DTYPE).astype(np.float64)


def parse_address(address: str) -> Tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ProtocolError(f"Адрес '{address}' должен иметь вид host:port")
    return host, int(port)


class TcpCoordinator(Transport):
    """
    Координатор TCP-режима: принимает K соединений, собирает Δv_k и рассылает v

    Рукопожатие: машина шлет [0, k, α⁰_[k]], координатор отвечает
    [0, k, (n, K, ν, σ′, v⁰)].
    """

    def __init__(self, address: str, K: int, n: int, nu: float, sigma_prime: float, timeout: float = 300.0):
        self.address = address
        self.K = K
        self.n = n
        self.nu = nu
        self.sigma_prime = sigma_prime
        self.timeout = timeout
        self._server: Optional[socket.socket] = None
        self._connections: List[Optional[socket.socket]] = [None] * K
        self.bytes_received = [0] * K

    def start(self, v):
        host, port = parse_address(self.address)
        self._server = socket.create_server((host, port))
        self._server.settimeout(self.timeout)
        logger.info(f"Координатор слушает {host}:{port}, ожидаем {self.K} машин")

        alphas: List[Optional[np.ndarray]] = [None] * self.K
        for _ in range(self.K):
            try:
                conn, peer = self._server.accept()
            except socket.timeout as e:
                raise TransportError("Не все машины подключились за отведенное время", 0) from e
            conn.settimeout(self.timeout)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            round_index, machine, payload = recv_frame(conn, 0)
            if round_index != 0 or not 0 <= machine < self.K:
                raise ProtocolError(f"Неверное рукопожатие от {peer}: раунд {round_index}, машина {machine}")
            if self._connections[machine] is not None:
                raise ProtocolError(f"Машина {machine} подключилась повторно")
            self._connections[machine] = conn
            alphas[machine] = payload
            logger.info(f"Машина {machine} подключена ({peer[0]}:{peer[1]}, |P_k|={payload.size})")

        header = np.array([self.n, self.K, self.nu, self.sigma_prime], dtype=np.float64)
        for k, conn in enumerate(self._connections):
            send_frame(conn, 0, k, np.concatenate([header, v]))
        return alphas

    def _expect(self, k: int, round_index: int) -> np.ndarray:
        received_round, machine, payload = recv_frame(self._connections[k], round_index)
        if received_round != round_index or machine != k:
            raise ProtocolError(
                f"Ожидался кадр раунда {round_index} от машины {k}, получен раунд {received_round} от {machine}"
            )
        self.bytes_received[k] += frame_size(payload.size)
        return payload

    def collect_updates(self, round_index):
        updates = [self._expect(k, round_index) for k in range(self.K)]
        return updates, 0

    def gather_alpha(self, round_index):
        for k, conn in enumerate(self._connections):
            send_frame(conn, round_index, k)
        return [self._expect(k, round_index) for k in range(self.K)]

    def publish(self, v, round_index):
        for k, conn in enumerate(self._connections):
            send_frame(conn, round_index, k, v)

    def close(self):
        for k, conn in enumerate(self._connections):
            if conn is None:
                continue
            try:
                send_frame(conn, STOP_ROUND, k)
                conn.shutdown(socket.SHUT_WR)
                # Дочитываем до закрытия машиной, чтобы не оборвать ее последний кадр
                conn.settimeout(5.0)
                while conn.recv(65536):
                    pass
            except (TransportError, OSError):
                logger.debug(f"Машина {k} уже отключилась")
            conn.close()
        self._connections = [None] * self.K
        if self._server is not None:
            self._server.close()
            self._server = None


class TcpWorker:
    """Машина TCP-режима: цикл раундов до кадра остановки"""

    def __init__(self, address: str, worker: Worker, connect_timeout: float = 60.0, io_timeout: float = 3600.0):
        self.address = address
        self.worker = worker
        self.connect_timeout = connect_timeout
        self.io_timeout = io_timeout
        self.rounds_done = 0

    def _connect(self) -> socket.socket:
        host, port = parse_address(self.address)
        deadline = time.monotonic() + self.connect_timeout
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=self.connect_timeout)
                sock.settimeout(self.io_timeout)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                return sock
            except OSError as e:
                if time.monotonic() >= deadline:
                    raise TransportError(f"Не удалось подключиться к {self.address}: {e}", 0) from e
                time.sleep(0.2)

    def run(self) -> int:
        """Выполняет раунды до остановки; возвращает число выполненных раундов"""
        k = self.worker.machine
        with self._connect() as sock:
            send_frame(sock, 0, k, self.worker.alpha_local)
            _, _, payload = recv_frame(sock, 0)
            if payload.size < 4:
                raise ProtocolError("Ответ рукопожатия короче заголовка")
            n, K, nu, sigma_prime = payload[:4]
            self.worker.configure(int(n), int(K), nu, sigma_prime)
            self.worker.match_features(payload.size - 4)
            v = payload[4:].copy()
            self.worker.log.info(f"n={int(n)}, K={int(K)}, ν={nu:g}, σ′={sigma_prime:g}")

            round_index = 1
            while True:
                update = self.worker.step(v, round_index)
                send_frame(sock, round_index, k, update.delta_v)
                self.rounds_done = round_index
                received_round, _, payload = recv_frame(sock, round_index)
                if received_round == STOP_ROUND:
                    break
                if payload.size == 0:
                    send_frame(sock, round_index, k, self.worker.alpha_local)
                    received_round, _, payload = recv_frame(sock, round_index)
                    if received_round == STOP_ROUND:
                        break
                if received_round != round_index:
                    raise ProtocolError(f"Машина {k}: ожидался раунд {round_index}, получен {received_round}")
                v = payload.copy()
                round_index += 1
        self.worker.log.info(f"Остановка после {self.rounds_done} раундов")
        return self.rounds_done
