"""Prompt templates with ``$name`` placeholders (names may contain hyphens)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .domain import SubqragError


class TemplateError(SubqragError):
    pass


_PLACEHOLDER = re.compile(r"\$([A-Za-z](?:[A-Za-z0-9_-]*[A-Za-z0-9])?)")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_PLACEHOLDER.findall(self.body)))


def render(template: PromptTemplate, bindings: Mapping[str, object]) -> str:
    """Substitute every placeholder in one pass; bound values are never re-scanned."""
    missing = [p for p in template.placeholders if p not in bindings]
    if missing:
        raise TemplateError(f"template {template.name!r}: unbound placeholder ${missing[0]}")
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template.body)


JSON_ONLY = "Respond with a single JSON object and nothing else."

DECOMPOSE = PromptTemplate(
    "decompose",
    "Decompose the following complex question into a collection of around $target-count "
    "sub-questions that you think would be relevant to answer the complex question fully.\n"
    "\n"
    "Complex question: $question\n"
    "Collection of sub-questions:\n"
    "\n"
    f'{JSON_ONLY} Format: {{"sub_questions": ["<sub-question>", ...]}}',
)

CLASSIFY = PromptTemplate(
    "classify",
    "Based on the sub-question's relevance and functional role in answering the complex "
    "question, classify the sub-question into three types: core, background, and follow-up.\n"
    "\n"
    "The definitions of these three sub-question types are:\n"
    "(1) Core sub-questions:\n"
    " - They are central to the main topic and directly or partially address the complex question.\n"
    " - They are crucial for interpreting the logical reasoning of the complex question and "
    "provide essential insights required for answering the complex question.\n"
    " - They often involve multiple steps or perspectives, making them fundamental to generating "
    "a comprehensive and well-rounded response to the complex question.\n"
    "(2) Background sub-questions:\n"
    " - They are optional when answering the complex question, but they can provide additional "
    "context or background information that helps clarify the complex question.\n"
    " - Their primary role is to support the understanding of the main topic by offering "
    "supplementary evidence or information, though it is not strictly necessary for addressing "
    "the core aspects of the complex question.\n"
    "(3) Follow-up sub-questions:\n"
    " - They are not needed to answer the complex question.\n"
    " - They often arise after users receive an initial answer and seek further clarification "
    "or details.\n"
    " - They may explore specific aspects of the response in greater depth, but their answers "
    "can sometimes be out-of-scope or beyond the focus of the original complex question.\n"
    "\n"
    "Here are a few examples you can use for reference:\n"
    "$few-shot-examples\n"
    "\n"
    "Complex question: $question\n"
    "Sub-question: $sub-question\n"
    "Type classification:\n"
    "\n"
    f'{JSON_ONLY} Format: {{"type": "core" | "background" | "follow_up"}}',
)

COVERAGE = PromptTemplate(
    "coverage",
    "You are given a piece of text and a question.\n"
    "Judge if there exists any part of the given text that can answer the question.\n"
    "If you believe the question can be answered, identify the text fragment that answers the "
    'question; otherwise, just return "None".\n'
    "\n"
    "Here are a few examples you can use for reference:\n"
    "$few-shot-examples\n"
    "\n"
    "Piece of text: $text\n"
    "Question: $sub-question\n"
    "Judgment:\n"
    "\n"
    f'{JSON_ONLY} Format: {{"covered": true | false, "quote": "<verbatim fragment from the text>" | null}}',
)

# Generation and judging prompts below are bundled fixtures, not published text.

CORE_DEFINITION = (
    "A core sub-question is central to the main topic and directly or partially addresses the "
    "main question. It is crucial for interpreting the logical reasoning of the main question "
    "and provides essential insights required for answering it. These sub-questions often "
    "involve multiple steps or perspectives, making them fundamental to generating "
    "comprehensive and well-rounded responses."
)

GENERATE = PromptTemplate(
    "generate",
    "Use the numbered context passages below to answer the question. "
    "Write a long-form answer of around $target-words words.\n"
    "\n"
    "Context:\n"
    "$contexts\n"
    "\n"
    "Question: $question\n"
    "Answer:",
)

M1_INSTRUCTIONS = (
    "Definition of core sub-questions: " + CORE_DEFINITION + "\n"
    "Before answering, come up with the core sub-questions of the question, and cover as many "
    "core sub-questions as possible in your answer.\n\n"
)

M2_INSTRUCTIONS = (
    "Core sub-questions to address:\n"
    "$core-sub-questions\n"
    "Address all of these core sub-questions in your answer.\n\n"
)

SYNTHESIZE = PromptTemplate(
    "synthesize",
    "Below are answers to the core sub-questions of a question. Combine them into a single "
    "coherent long-form answer of around $target-words words to the original question.\n"
    "\n"
    "Sub-answers:\n"
    "$sub-answers\n"
    "\n"
    "Original question: $question\n"
    "Final answer:",
)

JUDGE_PAIR = PromptTemplate(
    "judge_pair",
    "You are comparing two responses to the same question. Judge which response is better "
    "overall, considering how completely, accurately and relevantly it answers the question. "
    "You must pick one; ties are not allowed.\n"
    "\n"
    "Question: $question\n"
    "\n"
    "Response A: $response-a\n"
    "\n"
    "Response B: $response-b\n"
    "\n"
    f'{JSON_ONLY} Format: {{"winner": "A" | "B"}}',
)

REASK_SUFFIX = (
    "\n\nYour previous reply could not be parsed. Reply again with only the JSON object in "
    "the required format."
)
