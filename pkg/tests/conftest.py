import uuid

import pytest

from synthjudge.broker.external import RespBroker
from synthjudge.broker.memory import MemoryBroker
from synthjudge.broker.miniresp import start_server
from synthjudge.sandbox import ResourceLimits


@pytest.fixture(scope="session")
def fast_limits():
    return ResourceLimits(
        wall_time_ms=2000, cpu_time_ms=1500,
        memory_bytes=512 << 20, output_cap_bytes=1 << 20,
    )


@pytest.fixture(scope="session")
def resp_server():
    server = start_server()
    yield server
    server.shutdown()


@pytest.fixture(params=["memory", "resp"])
def any_broker(request, resp_server):
    """The same contract suite runs against both broker implementations."""
    if request.param == "memory":
        yield MemoryBroker()
    else:
        broker = RespBroker(
            "127.0.0.1", resp_server.port, namespace=f"t{uuid.uuid4().hex[:8]}"
        )
        yield broker
        broker.flush_namespace()
