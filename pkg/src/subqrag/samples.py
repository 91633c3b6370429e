"""Bundled decomposition samples, used as few-shot material and test fixtures."""

from __future__ import annotations

from dataclasses import dataclass

from .domain import SubQuestionType

CORE, BACKGROUND, FOLLOW_UP = SubQuestionType.CORE, SubQuestionType.BACKGROUND, SubQuestionType.FOLLOW_UP


@dataclass(frozen=True)
class DecompositionSample:
    question: str
    core: tuple[str, ...]
    background: tuple[str, ...]
    follow_up: tuple[str, ...]

    def labeled(self) -> list[tuple[str, SubQuestionType]]:
        return ([(s, CORE) for s in self.core] + [(s, BACKGROUND) for s in self.background]
                + [(s, FOLLOW_UP) for s in self.follow_up])


CARBON_CYCLE = DecompositionSample(
    question="How can human activity affect the carbon cycle?",
    core=(
        "What human activities contribute to carbon emissions?",
        "How does deforestation affect the carbon cycle?",
        "What role does the burning of fossil fuels play in the carbon cycle?",
        "How do agricultural practices impact the carbon cycle?",
        "What is the effect of urbanization on the carbon cycle?",
        "How do industrial processes alter the carbon cycle?",
        "What is the impact of increased carbon dioxide levels on global warming?",
        "How does the alteration of the carbon cycle affect ocean chemistry?",
        "How can changes in land use affect the carbon cycle?",
        "What are the effects of waste management and landfill operations on the carbon cycle?",
        "How do energy production methods influence the carbon cycle?",
        "How can reforestation and afforestation impact the carbon cycle?",
    ),
    background=(
        "What is the carbon cycle and how does it function?",
        "What are the main components of the carbon cycle?",
        "What are the natural sources of carbon emissions?",
    ),
    follow_up=(
        "What are the consequences of the carbon cycle disruption on wildlife?",
        "How does the carbon cycle influence climate change?",
        "What are the long-term effects of altered carbon cycles on Earth's ecosystems?",
        "What are some ways to mitigate human impact on the carbon cycle?",
        "What policies can be implemented to reduce carbon emissions?",
    ),
)

READING = DecompositionSample(
    question="How does reading foster long-term learning?",
    core=(
        "How does the brain process and store information read from texts?",
        "How does reading comprehension contribute to knowledge retention?",
        "How does the complexity of text affect comprehension and memory retention?",
        "What role does prior knowledge and experience play in reading comprehension?",
        "How does note-taking while reading enhance long-term memory?",
        "What are the neurological benefits of regular reading?",
        "How does reading fiction versus non-fiction impact long-term learning?",
        "How does the frequency of reading affect long-term cognitive abilities?",
        "What role does visualization while reading play in memory retention?",
        "How can reading multiple sources on the same topic enhance understanding and retention?",
        "What are the long-term impacts of reading on academic performance?",
        "How does reading influence critical thinking and analytical skills over time?",
        "What strategies can be employed to improve reading habits for better long-term learning?",
    ),
    background=(
        "What is the definition of long-term learning?",
        "What cognitive skills are involved in reading?",
        "How does active reading differ from passive reading?",
    ),
    follow_up=(
        "What types of reading materials are most effective for long-term learning?",
        "What are the benefits of discussing or teaching others about what one has read?",
        "What are the effects of digital versus physical reading on learning?",
        "How does age affect the ability to learn from reading?",
    ),
)

MALNUTRITION = DecompositionSample(
    question=("Why is a starving individual more susceptible to infectious disease than a "
              "well-nourished individual?"),
    core=(
        "How does malnutrition affect the immune system?",
        "How does protein-energy malnutrition impact immune cell function?",
        "What role do micronutrients play in immune system function?",
        "Which micronutrients are most important for a healthy immune response?",
        "How does deficiency in specific micronutrients affect susceptibility to infections?",
        "How does malnutrition alter the physical barriers of the body that prevent infection?",
        "What is the impact of malnutrition on the gut microbiome?",
        "How does the alteration of the gut microbiome in malnourished individuals affect immune function?",
        "What are the physiological changes in a malnourished body that increase infection risk?",
        "How does malnutrition affect the healing process after an infection?",
        "How does the severity and duration of malnutrition affect the level of increased "
        "susceptibility to infectious diseases?",
    ),
    background=(
        "What is the definition of malnutrition?",
        "What are the key components of the immune system?",
        "What are the statistics on infection rates in malnourished versus well-nourished populations?",
    ),
    follow_up=(
        "What are common infectious diseases that affect malnourished individuals?",
        "How do socioeconomic factors contribute to malnutrition and increased susceptibility to "
        "infectious diseases?",
        "What interventions can reduce the impact of malnutrition on susceptibility to infectious diseases?",
        "How effective are nutritional supplements in restoring immune function in malnourished individuals?",
        "What are the long-term effects of childhood malnutrition on adult immune function?",
        "What policies are effective in combating malnutrition and thus reducing susceptibility to "
        "infectious diseases?",
    ),
)

SAMPLES = (CARBON_CYCLE, READING, MALNUTRITION)


# Few-shot pool for classification, cycling through types so any prefix is balanced.
CLASSIFY_FEW_SHOT: tuple[tuple[str, str, SubQuestionType], ...] = (
    (CARBON_CYCLE.question, CARBON_CYCLE.core[1], CORE),
    (MALNUTRITION.question, MALNUTRITION.background[0], BACKGROUND),
    (READING.question, READING.follow_up[3], FOLLOW_UP),
    (READING.question, READING.core[1], CORE),
    (CARBON_CYCLE.question, CARBON_CYCLE.background[0], BACKGROUND),
    (MALNUTRITION.question, MALNUTRITION.follow_up[2], FOLLOW_UP),
)


# Coverage few-shot set: one covered, one uncovered, one only partially relevant.
COVERAGE_FEW_SHOT: tuple[tuple[str, str, str | None], ...] = (
    (
        "Cutting down forests releases the carbon stored in trees and soil, and it removes "
        "vegetation that would otherwise absorb carbon dioxide from the air.",
        "How does deforestation affect the carbon cycle?",
        "Cutting down forests releases the carbon stored in trees and soil",
    ),
    (
        "Regular readers tend to report lower stress levels and often read before sleeping.",
        "How does note-taking while reading enhance long-term memory?",
        None,
    ),
    (
        "The immune system includes white blood cells, antibodies, the lymphatic system and "
        "the spleen. Its health depends on many factors.",
        "How does protein-energy malnutrition impact immune cell function?",
        None,
    ),
)
