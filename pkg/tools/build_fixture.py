"""Regenerate the bundled fixture dataset under src/subqrag/data/fixture/.

The fixture is built from an explicit coverage design: every sentence of every
answer and chunk declares which sub-question (if any) it answers.  From that
design the script writes the JSONL inputs, a mock-provider script that replays
the intended judgments, and ``expected.json`` with scenario counts derived
straight from the design (never from the package's metric code).

    python tools/build_fixture.py
"""

from __future__ import annotations

import json
from pathlib import Path

from subqrag.decompose import Decomposition
from subqrag.domain import Chunk, MainQuestion, SubQuestion, SubQuestionType
from subqrag.gateway import Gateway, MockProvider, MockRule
from subqrag.rag import RagConfig, build_index, m3_context, retrieve
from subqrag.samples import CARBON_CYCLE, MALNUTRITION, READING

OUT = Path(__file__).resolve().parent.parent / "src" / "subqrag" / "data" / "fixture"
C, B, F = "core", "background", "follow_up"
SYSTEMS = ("engine-a", "engine-b")
METHODS = ("baseline", "m1", "m2", "m3", "m4")
# Judge preference order; (m1, baseline) is left unscripted so the position-biased
# catch-all turns it into a split.
RANK = {"m3": 4, "m4": 3, "m2": 2, "m1": 1, "baseline": 0}
UNSCRIPTED = {frozenset(("m1", "baseline"))}

DESIGN = {
    "q1": {
        "sample": CARBON_CYCLE,
        "answers": {
            "engine-a": [
                ("The carbon cycle moves carbon between the atmosphere, oceans, soils and living "
                 "organisms through photosynthesis, respiration and decomposition.", (B, 0)),
                ("Human activities such as burning coal, oil and gas, clearing land and making cement "
                 "add large amounts of carbon dioxide to the atmosphere.", (C, 0)),
                ("Deforestation releases carbon stored in trees and removes forests that would "
                 "otherwise absorb carbon dioxide.", (C, 1)),
                ("Extra carbon dioxide dissolves in seawater and makes the oceans more acidic.", (C, 7)),
                ("These changes happen much faster than natural processes can balance them.", None),
                ("Protecting forests and switching to renewable energy are practical ways to reduce "
                 "this human impact.", (F, 3)),
            ],
            "engine-b": [
                ("Burning fossil fuels is the largest way people push extra carbon into the air.", (C, 2)),
                ("Scientists track these flows carefully.", None),
                ("Because carbon dioxide traps heat, a disrupted carbon cycle feeds directly into "
                 "climate change.", (F, 1)),
                ("Volcanoes and natural respiration are also sources of carbon emissions.", (B, 2)),
            ],
        },
        "chunks": [
            [("Tropical deforestation is responsible for roughly a tenth of global carbon emissions "
              "because felled trees release their stored carbon.", (C, 1)),
             ("Converting grassland and wetlands to farmland also changes how much carbon the land "
              "can hold.", (C, 8))],
            [("Fossil fuel combustion moves carbon that was locked underground for millions of years "
              "into the atmosphere.", (C, 2)),
             ("Power plants that burn coal emit far more carbon per unit of electricity than wind or "
              "solar farms.", (C, 10))],
            [("Roughly a quarter of emitted carbon dioxide is absorbed by the ocean, lowering its pH.", (C, 7))],
            [("How can human activity affect the carbon cycle? Human activity and the carbon cycle are "
              "topics of many public debates about how human activity can affect the carbon cycle.", None)],
        ],
    },
    "q2": {
        "sample": READING,
        "answers": {
            "engine-a": [
                ("Long-term learning means retaining knowledge and skills so they can be recalled and "
                 "used months or years later.", (B, 0)),
                ("When we read, the brain links new words and ideas to existing memory networks, which "
                 "helps store the information.", (C, 0)),
                ("Taking notes while reading forces readers to rephrase ideas, which strengthens "
                 "long-term memory.", (C, 4)),
                ("Over time, regular reading sharpens critical thinking because readers weigh arguments "
                 "and evidence.", (C, 11)),
                ("Some studies suggest printed books support deeper comprehension than screens.", (F, 2)),
            ],
            "engine-b": [
                ("Reading comprehension helps people retain knowledge because understood material is "
                 "easier to remember.", (C, 1)),
                ("Reading draws on decoding, vocabulary and working memory.", (B, 1)),
                ("Children and older adults may learn from reading at different rates.", (F, 3)),
            ],
        },
        "chunks": [
            [("Neuroscientists find that reading activates language and memory regions that "
              "consolidate new information.", (C, 0)),
             ("Regular readers show stronger connectivity in brain networks.", (C, 5))],
            [("Students who summarize a text in their own notes remember more of it weeks later.", (C, 4))],
            [("Reading several sources on one topic helps learners integrate ideas and retain them.", (C, 9))],
            [("How does reading foster long-term learning? Reading and long-term learning are linked, "
              "and how reading can foster long-term learning is a common question.", None)],
        ],
    },
    "q3": {
        "sample": MALNUTRITION,
        "answers": {
            "engine-a": [
                ("Malnutrition weakens the immune system, reducing the number and activity of white "
                 "blood cells.", (C, 0)),
                ("Micronutrients such as zinc, iron and vitamin A are needed for immune cells to work "
                 "properly.", (C, 2)),
                ("Malnutrition is a condition caused by a lack of energy, protein or essential "
                 "nutrients.", (B, 0)),
                ("Starvation also thins the skin and gut lining, which are physical barriers against "
                 "infection.", (C, 5)),
                ("Common infections in malnourished people include pneumonia, diarrhoeal disease and "
                 "measles.", (F, 0)),
            ],
            "engine-b": [
                ("Protein-energy malnutrition shrinks the thymus and impairs T cell function.", (C, 1)),
                ("The immune system consists of innate defences, antibodies and specialized white "
                 "blood cells.", (B, 1)),
                ("Therapeutic feeding programs can reduce infection risk in starving children.", (F, 2)),
            ],
        },
        "chunks": [
            [("Undernutrition is the most common cause of immunodeficiency worldwide.", (C, 0)),
             ("Malnutrition changes the gut microbiome and lets harmful bacteria grow.", (C, 6))],
            [("Zinc, vitamin A and vitamin D are among the micronutrients most important for immune "
              "responses.", (C, 3))],
            [("In starving individuals the skin and intestinal lining become thinner and more "
              "permeable to pathogens.", (C, 5))],
            [("Why is a starving individual more susceptible to infectious disease than a "
              "well-nourished individual? Whether a starving individual is more susceptible to "
              "infectious disease is a common question.", None)],
        ],
    },
}

# Judge quirks exercised by the fixture: a drifting quote that must be downgraded,
# and a bare "None" completion.
DRIFT = ("q2", "engine-b", (C, 1))
BARE_NONE = ("q3", "engine-a", (F, 1))


def subq_text(sample, ref) -> str:
    kind, idx = ref
    return {C: sample.core, B: sample.background, F: sample.follow_up}[kind][idx]


def subquestion_list(qid: str, sample) -> list[tuple[str, str]]:
    return [(t, qt.value) for t, qt in sample.labeled()]


def cov_rule(text: str, sq: str, quote: str | None) -> dict:
    resp = {"covered": quote is not None, "quote": quote}
    return {"match": [f"Piece of text: {text}\nQuestion: {sq}\nJudgment:"], "response": resp}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    questions, chunks, answers, rules = [], [], [], []
    expected: dict = {"systems": {s: {} for s in SYSTEMS}, "decomposition_counts": {}}

    for qid, d in DESIGN.items():
        sample = d["sample"]
        questions.append({"id": qid, "text": sample.question})
        labeled = subquestion_list(qid, sample)
        expected["decomposition_counts"][qid] = {
            "core": len(sample.core), "background": len(sample.background), "follow_up": len(sample.follow_up)}
        rules.append({"match": [f"Complex question: {sample.question}\nCollection of sub-questions:"],
                      "response": {"sub_questions": [t for t, _ in labeled]}})
        for text, label in labeled:
            rules.append({"match": [f"Sub-question: {text}\nType classification:"], "response": {"type": label}})

        chunk_texts = []
        retrieved: set[str] = set()
        for k, sentences in enumerate(d["chunks"], 1):
            text = " ".join(s for s, _ in sentences)
            chunk_texts.append(text)
            chunks.append({"id": f"{qid}-c{k}", "question_id": qid, "source": f"https://example.org/{qid}/{k}",
                           "text": text})
            for sentence, ref in sentences:
                if ref is not None:
                    retrieved.add(subq_text(sample, ref))
                    rules.append(cov_rule(text, subq_text(sample, ref), sentence))

        for sid in SYSTEMS:
            sentences = d["answers"][sid]
            text = " ".join(s for s, _ in sentences)
            answers.append({"question_id": qid, "system_id": sid, "text": text})
            answered = {}
            word_pos = 0
            total_words = len(text.split())
            for sentence, ref in sentences:
                if ref is not None:
                    sq = subq_text(sample, ref)
                    if (qid, sid, ref) == DRIFT:
                        rules.append(cov_rule(text, sq, "a sentence that never appears in the answer"))
                    else:
                        rules.append(cov_rule(text, sq, sentence))
                        answered[sq] = 100.0 * word_pos / total_words
                word_pos += len(sentence.split())
            if BARE_NONE[:2] == (qid, sid):
                sq = subq_text(sample, BARE_NONE[2])
                rules.append({"match": [f"Piece of text: {text}\nQuestion: {sq}\nJudgment:"], "response": "None"})
            per_type = expected["systems"][sid].setdefault("scenario_counts", {C: [0, 0, 0, 0], B: [0, 0, 0, 0],
                                                                                 F: [0, 0, 0, 0]})
            positions = expected["systems"][sid].setdefault("positions", {C: [], B: [], F: []})
            for text_sq, label in labeled:
                a, r = text_sq in answered, text_sq in retrieved
                per_type[label][2 * a + r] += 1
                if a:
                    positions[label].append(answered[text_sq])
            fractions = expected["systems"][sid].setdefault("core_chunk_fractions", {"answered": [], "unanswered": []})
            for text_sq in sample.core:
                n = sum(any(subq_text(sample, ref) == text_sq for _, ref in sents if ref) for sents in d["chunks"])
                fractions["answered" if text_sq in answered else "unanswered"].append(n / len(d["chunks"]))

    rules.append({"match": "Judge if there exists any part of the given text", "response":
                  {"covered": False, "quote": None}})

    # Strategy generation rules; the M3 rule keys on the chunk M3 ranks first.
    gw = Gateway(MockProvider([MockRule(r["match"], json.dumps(r["response"]) if not isinstance(
        r["response"], str) else r["response"]) for r in rules]))
    gen_rules, sub_rules = [], []
    for qid, d in DESIGN.items():
        sample = d["sample"]
        q = MainQuestion(qid, sample.question)
        qchunks = [Chunk(c["id"], qid, c["text"], c["source"]) for c in chunks if c["question_id"] == qid]
        index = build_index(gw, qchunks)
        decomp = Decomposition(qid, tuple(SubQuestion(f"{qid}/sq{k}", qid, t, SubQuestionType.parse(lbl))
                                          for k, (t, lbl) in enumerate(subquestion_list(qid, sample), 1)))
        base_top = retrieve(gw, index, q.text, 10)[0][0]
        m3_top = m3_context(gw, q, decomp, index, RagConfig())[0].chunk_id
        assert base_top != m3_top, (qid, base_top, m3_top)
        m3_text = index.chunk(m3_top).text
        tail = f"Question: {q.text}\nAnswer:"
        gen_rules += [
            {"match": ["Definition of core sub-questions", tail],
             "response": f"[m1] Thinking about its core sub-questions first: {sample.core[0]} {sample.core[1]}"},
            {"match": ["Core sub-questions to address", tail],
             "response": f"[m2] Each core sub-question is answered in turn, starting with: {sample.core[0]}"},
            {"match": [f"Context:\n[1] {m3_text}", tail],
             "response": f"[m3] Drawing on passages chosen for core coverage: {m3_text}"},
            {"match": [tail], "response": f"[baseline] A general answer to: {q.text}"},
            {"match": ["Sub-answers:", f"Original question: {q.text}\nFinal answer:"],
             "response": f"[m4] Combined from {len(sample.core)} sub-answers about: {q.text}"},
        ]
    sub_rules.append({"match": "\nAnswer:", "response": "A focused sub-answer drawn from the retrieved passages."})

    judge_rules = []
    for a in METHODS:
        for b in METHODS:
            if a == b or frozenset((a, b)) in UNSCRIPTED:
                continue
            winner = "A" if RANK[a] > RANK[b] else "B"
            judge_rules.append({"match": [f"Response A: [{a}]", f"Response B: [{b}]"], "response": {"winner": winner}})
    judge_rules.append({"match": "Response A:", "response": {"winner": "A"}})  # position-biased fallback

    all_rules = rules[:-1] + judge_rules + gen_rules + sub_rules + rules[-1:]

    def write(name: str, rows: list[dict]) -> None:
        (OUT / name).write_text("".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows),
                                encoding="utf-8")

    write("questions.jsonl", questions)
    write("chunks.jsonl", chunks)
    write("answers.jsonl", answers)
    write("mock.jsonl", all_rules)
    expected["judge_rank"] = RANK
    expected["unscripted_pairs"] = [sorted(p) for p in UNSCRIPTED]
    (OUT / "expected.json").write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote fixture with {len(all_rules)} mock rules to {OUT}")


if __name__ == "__main__":
    main()
