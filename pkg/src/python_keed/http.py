from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping


@dataclass(frozen=True)
class HttpDownload:
    """A fully read response body.

    Attributes:
        url: Requested URL
        status: HTTP status code
        content: Body bytes, after any transfer decoding
        declared_length: Content-Length of an identity-encoded body, else None
    """
    url: str
    status: int
    content: bytes
    declared_length: int | None = None

    @property
    def truncated(self) -> bool:
        return self.declared_length is not None and self.declared_length != len(self.content)


def declared_length(headers: Mapping[str, str]) -> int | None:
    """Content-Length, only when it describes the bytes we end up holding."""
    if headers.get("Content-Encoding", "identity").lower() != "identity":
        return None
    value = headers.get("Content-Length")
    try:
        return None if value is None else int(value)
    except ValueError:
        return None


class HttpClient(ABC):
    @abstractmethod
    async def download(self, url: str) -> HttpDownload:
        """GET ``url`` and read the whole body; raises on non-2xx status."""
        pass

try:
    import aiohttp

    class AioHttpClient(HttpClient):
        session: aiohttp.ClientSession

        def __init__(self, session: aiohttp.ClientSession):
            assert isinstance(session, aiohttp.ClientSession)
            self.session = session

        async def __aenter__(self):
            await self.session.__aenter__()
            return self

        async def __aexit__(self, exc_type, exc_val, exc_tb):
            return await self.session.__aexit__(exc_type, exc_val, exc_tb)

        async def download(self, url: str) -> HttpDownload:
            async with self.session.get(url) as response:
                response.raise_for_status()
                content = await response.read()
                return HttpDownload(url, response.status, content, declared_length(response.headers))

except ImportError:
    AioHttpClient = None

try:
    import httpx

    class HttpxClient(HttpClient):
        client: httpx.AsyncClient

        def __init__(self, client: httpx.AsyncClient):
            assert isinstance(client, httpx.AsyncClient)
            self.client = client

        async def __aenter__(self):
            await self.client.__aenter__()
            return self

        async def __aexit__(self, exc_type, exc_val, exc_tb):
            return await self.client.__aexit__(exc_type, exc_val, exc_tb)

        async def download(self, url: str) -> HttpDownload:
            response = await self.client.get(url)
            try:
                response.raise_for_status()
                return HttpDownload(url, response.status_code, response.content, declared_length(response.headers))
            finally:
                await response.aclose()

except ImportError:
    HttpxClient = None

def createHttpClient(client) -> HttpClient:
    if AioHttpClient is not None and isinstance(client, aiohttp.ClientSession):
        return AioHttpClient(client)
    if HttpxClient is not None and isinstance(client, httpx.AsyncClient):
        return HttpxClient(client)
    assert False, "Unable to create HttpClient. Install python-keed[httpx] or python-keed[aiohttp]."
