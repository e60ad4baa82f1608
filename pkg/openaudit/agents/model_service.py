"""
openaudit/agents/model_service.py — Agent backed by an external model service.

Two wire shapes are supported:
- minimal: POST {"model", "prompt"} to the endpoint, read {"text"} back
- openai:  chat completions through the openai client (vendor mapping)

The response text is returned verbatim; nothing here interprets it.
"""

import os
import time
from typing import Optional

import httpx

from openaudit.agents.base import AgentBinding, AgentOutput, BaseAgent
from openaudit.agents.prompt import render_prompt
from openaudit.errors import DispatchError
from openaudit.logs import get_logger

log = get_logger(__name__)

API_KEY_ENV = "OPENAUDIT_API_KEY"


class ModelServiceAgent(BaseAgent):
    """
    Sends the rendered context pack to a model service.

    Example:
        >>> binding = AgentBinding(
        ...     name="auditor", kind="model_service",
        ...     endpoint="http://localhost:8080/generate", model="audit-small",
        ... )
        >>> agent = ModelServiceAgent(binding)
        >>> output = agent.dispatch(pack)
    """

    def __init__(
        self,
        binding: AgentBinding,
        client: Optional[httpx.Client] = None,
        openai_client=None,
        sleep=time.sleep,
    ):
        """
        Initialize ModelServiceAgent.

        Args:
            binding: model_service binding (endpoint, model, timeout, retries)
            client: httpx client for the minimal api (for testing/injection)
            openai_client: OpenAI client instance for the openai api (for testing/injection)
            sleep: Pause function used between attempts
        """
        if binding.kind != "model_service":
            raise ValueError(f"agent {binding.name} is not a model_service binding")
        self.binding = binding
        self.name = binding.name
        self.client = client
        self.openai_client = openai_client
        self._sleep = sleep

    def dispatch(self, pack) -> AgentOutput:
        """
        Render the pack and send it, retrying failed requests.

        Raises:
            DispatchError: If every attempt fails
        """
        prompt = render_prompt(pack, actor=self.name)
        attempts = self.binding.max_retries + 1
        last_error = ""
        for attempt in range(1, attempts + 1):
            start = time.perf_counter()
            try:
                if self.binding.api == "openai":
                    text = self._send_openai(prompt)
                else:
                    text = self._send_minimal(prompt)
            except Exception as e:  # httpx, openai and malformed bodies alike
                last_error = f"{type(e).__name__}: {e}"
            else:
                latency = int((time.perf_counter() - start) * 1000)
                return AgentOutput(raw_text=text, latency_ms=latency, attempt=attempt)
            log.warning(
                "dispatch_attempt_failed",
                agent=self.name,
                task_id=pack.task.task_id,
                attempt=attempt,
                error=last_error[:200],
            )
            if attempt < attempts and self.binding.retry_backoff_seconds:
                self._sleep(self.binding.retry_backoff_seconds)
        raise DispatchError(f"model service unavailable after {attempts} attempts: {last_error[:200]}")

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _send_minimal(self, prompt: str) -> str:
        payload = {"model": self.binding.model, "prompt": prompt}
        if self.client is not None:
            response = self.client.post(
                self.binding.endpoint,
                json=payload,
                headers=self._headers(),
                timeout=self.binding.timeout_seconds,
            )
        else:
            with httpx.Client(timeout=self.binding.timeout_seconds) as client:
                response = client.post(self.binding.endpoint, json=payload, headers=self._headers())
        response.raise_for_status()
        body = response.json()
        text = body["text"]
        if not isinstance(text, str):
            raise TypeError("response field 'text' is not a string")
        return text

    def _send_openai(self, prompt: str) -> str:
        client = self.openai_client
        if client is None:
            from openai import OpenAI

            client = OpenAI(
                base_url=self.binding.endpoint,
                api_key=os.environ.get(API_KEY_ENV, "unset"),
                timeout=self.binding.timeout_seconds,
                max_retries=0,
            )
            self.openai_client = client
        response = client.chat.completions.create(
            model=self.binding.model,
            messages=[{"role": "user", "content": prompt}],
            temperature=0,
        )
        return response.choices[0].message.content or ""
