"""
HTTP chat client used for relevance judgments and query reformulation.

Transport errors are retried with exponential backoff; the endpoint shape is adapted
through ``request_template`` (extra body fields) and ``response_path`` (where the reply
text lives in the JSON response).
"""
import logging
import os
import threading

import backoff
import requests

from boRank.utils.errors import OracleResponseError, OracleTransportError

logger = logging.getLogger(__name__)

OPENAI_RESPONSE_PATH = ("choices", 0, "message", "content")


def _is_permanent(e):
    """Client errors other than rate limiting are not worth retrying."""
    response = getattr(e, "response", None)
    return response is not None and 400 <= response.status_code < 500 and response.status_code != 429


def extract_text(payload, response_path=OPENAI_RESPONSE_PATH):
    node = payload
    for key in response_path:
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            raise OracleResponseError(f"Response has no field at {list(response_path)}") from None
    if not isinstance(node, str):
        raise OracleResponseError(f"Response field at {list(response_path)} is not text")
    return node


class LLMClient:
    """
    Chat-completions style client.

    Parameters
    ----------
    endpoint : str
        URL receiving the POST
    model : str
    api_key_env : str
        Environment variable holding the API key. Sent as a bearer token if set
    timeout : float
        Seconds per request
    max_retries : int
        Retries after the first failed attempt. Default 3
    backoff_factor : float
        Base delay multiplier for the exponential backoff, in seconds
    request_template : dict or None
        Extra fields merged into every request body
    response_path : sequence
        Keys/indices leading to the reply text

    Examples
    --------
    >>> client = LLMClient("http://localhost:8000/v1/chat/completions", "my-model")
    >>> client.chat([{"role": "user", "content": "Say hi"}])
    """

    def __init__(self, endpoint, model, api_key_env="BORANK_API_KEY", timeout=60.0, max_retries=3,
                 backoff_factor=1.0, request_template=None, response_path=OPENAI_RESPONSE_PATH, temperature=0):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.request_template = dict(request_template or {})
        self.response_path = tuple(response_path)
        self.temperature = temperature
        self.session = requests.Session()
        self.transport_calls = 0
        self._lock = threading.Lock()
        self._post = backoff.on_exception(backoff.expo,
                                          requests.exceptions.RequestException,
                                          max_tries=max_retries + 1,
                                          giveup=_is_permanent,
                                          factor=backoff_factor,
                                          jitter=None,
                                          on_backoff=self._log_backoff)(self._post_once)

    @classmethod
    def from_config(cls, config):
        return cls(config.endpoint, config.model, api_key_env=config.api_key_env, timeout=config.timeout,
                   max_retries=config.max_retries, backoff_factor=config.backoff_factor,
                   request_template=config.request_template, response_path=config.response_path)

    @staticmethod
    def _log_backoff(details):
        logger.warning("LLM request failed (attempt %d), retrying in %.1fs", details["tries"], details["wait"])

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_once(self, body):
        with self._lock:
            self.transport_calls += 1
        response = self.session.post(self.endpoint, json=body, headers=self._headers(), timeout=self.timeout)
        response.raise_for_status()
        try:
            return response.json()
        except ValueError:
            raise OracleResponseError(f"Endpoint {self.endpoint} returned non-JSON content") from None

    def chat(self, messages):
        """
        Send ``messages`` and return the reply text.

        Raises
        ------
        OracleTransportError
            When every attempt failed.
        OracleResponseError
            When the reply cannot be located in the response JSON.
        """
        body = {**self.request_template, "model": self.model, "messages": list(messages),
                "temperature": self.temperature}
        try:
            payload = self._post(body)
        except requests.exceptions.RequestException as e:
            raise OracleTransportError(f"Request to {self.endpoint} failed: {e}") from e
        return extract_text(payload, self.response_path)
