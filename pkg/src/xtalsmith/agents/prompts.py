"""Prompt templates for the workflow planner and the tool-plan generator."""

from __future__ import annotations

MAX_WORKFLOW_STEPS = 5

PLANNER_HEADER = (
    "You are a Workflow Planner. Based on the task requirements and human "
    "expert intuition, provide a workflow as a list of necessary steps.\n"
    f"The workflow should contain no more than {MAX_WORKFLOW_STEPS} steps.\n"
    "Each step must involve data processing; steps such as environment "
    "setup, loading models, or loading data are not considered complete "
    "steps by themselves. End your output with a note for human approval "
    "or feedback.\n"
    "Each step should be detailed and written on a new line:\n"
    "\n"
    "Step 1:\n"
    "Step 2:\n"
    "...\n"
)


def render_planner_prompt(task: str, intuition: str, feedback: list[str] | None = None) -> str:
    parts = [PLANNER_HEADER, "", f'Task:"{task}"', "", f'Human intuition:"{intuition}"']
    for note in feedback or []:
        parts.append("")
        parts.append(f'Reviewer feedback:"{note}"')
    return "\n".join(parts) + "\n"


REPROMPT_NOTE = (
    "Your previous output could not be parsed. Write each step on its own "
    "line in the exact form 'Step N: description', numbered consecutively "
    "from 1."
)

TOOL_PLAN_HEADER = (
    "You are a Tool Plan Generator. Based on the information below (the "
    "previous step result, the current workflow step, and expert "
    "intuition), propose a plan of tool calls that performs the step.\n"
    "Define exactly one unique function named '{function_name}'. Use only "
    "tools from the catalog. Argument values may reference context values "
    "or earlier outputs as \"$name\", with fields reachable as "
    "\"$name.key\".\n"
    "Respond with a JSON object in the following format:\n"
    '{"function name": "{function_name}", '
    '"plan": [{"tool": "...", "args": {...}, "bind_output": "..."}], '
    '"comment": "..."}'
)


def render_tool_plan_prompt(
    function_name: str,
    step_description: str,
    previous_summary: str | None,
    intuition: str,
    catalog: str,
    context_keys: list[str],
    error_text: str | None = None,
) -> str:
    parts = [
        TOOL_PLAN_HEADER.replace("{function_name}", function_name),
        "",
        "Tool catalog:",
        catalog,
        "",
        "Available context values: " + (", ".join(context_keys) or "(none)"),
        "",
        "Previous step result:",
        previous_summary if previous_summary else "(none; this is the first step)",
        "",
        "Current step:",
        step_description,
        "",
        "Expert intuition:",
        intuition or "(none)",
    ]
    if error_text is not None:
        parts += [
            "",
            "The previous plan failed with this error:",
            error_text,
            "Revise the plan to fix it.",
        ]
    return "\n".join(parts) + "\n"
