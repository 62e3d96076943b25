"""Tool plans: the validated call sequence a step executes.

A plan arrives as a JSON envelope::

    {"function name": "step3",
     "plan": [{"tool": "...", "args": {...}, "bind_output": "name"}, ...],
     "comment": "..."}

Argument values may reference context values or earlier outputs as
``"$name"`` (one field deep via ``"$name.key"``; a literal leading dollar
is written ``"$$"``). Validation happens before any execution: unknown
tools, missing or unexpected parameters, and unresolvable references are
all rejected with the failing call index.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .toolbox import Toolbox, ToolContext, ToolError


class ToolPlanError(ValueError):
    """Plan rejected by validation; ``call_index`` is None for envelope-level
    problems."""

    def __init__(self, message: str, call_index: int | None = None):
        super().__init__(message)
        self.call_index = call_index


class ToolExecutionError(RuntimeError):
    """A validated plan failed at runtime at ``call_index``."""

    def __init__(self, message: str, call_index: int):
        super().__init__(message)
        self.call_index = call_index


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict
    bind_output: str | None = None


@dataclass(frozen=True)
class ToolPlan:
    function_name: str
    calls: tuple[ToolCall, ...]
    comment: str = ""

    def as_dict(self) -> dict:
        return {
            "function name": self.function_name,
            "plan": [
                {"tool": c.tool, "args": c.args, "bind_output": c.bind_output}
                for c in self.calls
            ],
            "comment": self.comment,
        }


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z]*\s*\n(.*?)\n\s*```\s*$", re.DOTALL)
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_REF_RE = re.compile(r"^\$([A-Za-z_][A-Za-z0-9_]*)(?:\.([A-Za-z_][A-Za-z0-9_]*))?$")


def _strip_fences(text: str) -> str:
    m = _FENCE_RE.match(text)
    return m.group(1) if m else text


def reference_parts(value) -> tuple[str, str | None] | None:
    """(name, field) when the value is a "$..." reference, else None."""
    if not isinstance(value, str) or not value.startswith("$"):
        return None
    if value.startswith("$$"):
        return None
    m = _REF_RE.match(value)
    if not m:
        raise ToolPlanError(f"malformed reference {value!r}")
    return m.group(1), m.group(2)


def parse_tool_plan(
    text: str,
    expected_function_name: str,
    toolbox: Toolbox,
    context_names: set[str],
) -> ToolPlan:
    """Parse and validate one plan envelope; raises :class:`ToolPlanError`."""
    try:
        raw = json.loads(_strip_fences(text))
    except json.JSONDecodeError as exc:
        raise ToolPlanError(f"invalid JSON: {exc.msg} at position {exc.pos}") from None
    if not isinstance(raw, dict):
        raise ToolPlanError("envelope must be a JSON object")
    name = raw.get("function name")
    if name is None:
        raise ToolPlanError('envelope is missing the "function name" field')
    if name != expected_function_name:
        raise ToolPlanError(
            f"function name {name!r} does not match the expected "
            f"{expected_function_name!r}"
        )
    plan = raw.get("plan")
    if not isinstance(plan, list) or not plan:
        raise ToolPlanError('envelope "plan" must be a non-empty list of calls')

    known = set(context_names)
    calls: list[ToolCall] = []
    for idx, item in enumerate(plan):
        if not isinstance(item, dict):
            raise ToolPlanError(f"call {idx} is not an object", idx)
        tool_name = item.get("tool")
        if tool_name not in toolbox:
            raise ToolPlanError(f"unknown tool {tool_name!r}", idx)
        spec = toolbox.get(tool_name)
        args = item.get("args", {})
        if not isinstance(args, dict):
            raise ToolPlanError(f"call {idx} args must be an object", idx)
        declared = {p.name: p for p in spec.params}
        for key in args:
            if key not in declared:
                raise ToolPlanError(
                    f"tool {tool_name!r} has no parameter {key!r}", idx
                )
        for pname, p in declared.items():
            if p.required and pname not in args:
                raise ToolPlanError(
                    f"tool {tool_name!r} missing required parameter {pname!r}", idx
                )
        for key, value in args.items():
            ref = reference_parts(value)
            if ref is not None and ref[0] not in known:
                raise ToolPlanError(
                    f"reference ${ref[0]} does not resolve to a context value "
                    f"or earlier output",
                    idx,
                )
        bind = item.get("bind_output")
        if bind is not None:
            if not isinstance(bind, str) or not _IDENT_RE.match(bind):
                raise ToolPlanError(f"bind_output {bind!r} is not an identifier", idx)
            if bind in known:
                raise ToolPlanError(
                    f"bind_output {bind!r} shadows an existing name", idx
                )
            known.add(bind)
        calls.append(ToolCall(tool=tool_name, args=dict(args), bind_output=bind))
    return ToolPlan(
        function_name=name,
        calls=tuple(calls),
        comment=str(raw.get("comment", "")),
    )


def _resolve_value(value, env: dict, call_index: int):
    if isinstance(value, str):
        if value.startswith("$$"):
            return value[1:]
        ref = reference_parts(value)
        if ref is not None:
            name, fld = ref
            if name not in env:
                raise ToolExecutionError(f"reference ${name} is unbound", call_index)
            target = env[name]
            if fld is None:
                return target
            if isinstance(target, dict) and fld in target:
                return target[fld]
            raise ToolExecutionError(
                f"reference ${name}.{fld}: no such field", call_index
            )
    if isinstance(value, list):
        return [_resolve_value(v, env, call_index) for v in value]
    if isinstance(value, dict):
        return {k: _resolve_value(v, env, call_index) for k, v in value.items()}
    return value


def run_tool_plan(
    plan: ToolPlan, toolbox: Toolbox, ctx: ToolContext, env: dict
) -> dict:
    """Execute calls in order; returns the newly bound outputs.

    ``env`` is read for references and is not mutated; runtime failures
    raise :class:`ToolExecutionError` with the call index.
    """
    scope = dict(env)
    bound: dict = {}
    for idx, call in enumerate(plan.calls):
        spec = toolbox.get(call.tool)
        kwargs = {
            key: _resolve_value(value, scope, idx) for key, value in call.args.items()
        }
        try:
            result = spec.fn(ctx, **kwargs)
        except ToolExecutionError:
            raise
        except (ToolError, ValueError, KeyError, TypeError, RuntimeError, OSError) as exc:
            raise ToolExecutionError(
                f"tool {call.tool!r} failed: {exc}", idx
            ) from exc
        if call.bind_output:
            scope[call.bind_output] = result
            bound[call.bind_output] = result
    return bound
