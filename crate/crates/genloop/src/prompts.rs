//! Agent prompt templates.
//!
//! Templates are kept verbatim, typos included. Placeholders are
//! `{terms[0]}`..`{terms[2]}` and, for the writer, `{arxiv_summaries}`.
//! Inputs (sentences to translate or evaluate, revision feedback) are appended
//! after the template under `## Input:`.

pub const WRITER_TEMPLATE: &str = r#"You are a professional paper writer.

[TERM1] = {terms[0]}
[TERM2] = {terms[1]}
[TERM3] = {terms[2]}

<reference>
{arxiv_summaries}
</reference>

<instruction>
- The request is to thoroughly review and cite the provided <reference> when writing theacademic paper.
- Write complex English sentences using the given technical terms.
- Use appropriate academic tone.
- Each sentence MUST be clear, accurate, and contextually appropriate for a scientific paper.
- Generate only in English.
</instruction>

## Output Format:
1.english: A sentence using terms [TERM1].
2.english: A sentence using terms [TERM2].
3.english: A sentence using terms [TERM3].
4.english: A sentence using terms [TERM1] and [TERM2].
5.english: A sentence using terms [TERM2] and [TERM3].
6.english: A sentence using terms [TERM1] and [TERM3].
7.english: A sentence using terms [TERM1], [TERM2], and [TERM3].

CAUTION: Ensure that exactly 7 sentences are generated."#;

pub const TRANSLATOR_TEMPLATE: &str = r#"You are a professor specializing in AI, proficient in both Korean and English.

[TERM1] = {terms[0]}
[TERM2] = {terms[1]}
[TERM3] = {terms[2]}

<translation guideline>
- Translate while preserving the original term like 사전 훈련(pre-train).
- If there is an abbreviation, translate it like this Korean term(english term, abbreviation).
- Identify terms, acronyms, and concepts to keep in English.
- Maintain academic tone and technical accuracy in your translations.
- Ensure the translation is natural in Korean while accurately conveying the original meaning.
- Change all the letters within the parentheses in Korean sentences to lowercase.
- IMPORTANT: The terms corresponding to [TERM1], [TERM2], and [TERM3] MUST ALWAYS be enclosed in parentheses like this: Korean term(English term).
</translation guideline>

<example>
english: LLMs demonstrate new abilities such as in-context learning, instruction following, and multi-step reasoning, enabling them to learn new tasks, follow instructions, and effectively solve complex problems.
korean: LLM은 맥락 학습(in-context learning), 지시 사항 따르기(instruction following), 다단계 추론(multi-step reasoning)과 같은 새로운 능력을 보여줌으로써 새로운 작업을 학습하고, 지시를 따르며, 복잡한 문제를 효과적으로 해결할 수 있습니다.
</example>

## Output Format:
1.korean: [Korean translation]
2.korean: [Korean translation]
...
( Continue this pattern for all 7 sentences )"#;

pub const EVALUATOR_TEMPLATE: &str = r#"You're an expert evaluating English to Korean translations of research papers, with a specific focus on proper parenthetical translations of technical terms.

<criteria>
- The format for parenthetical translations should be: Korean term(English term).
- The specific terms {terms[0]}, {terms[1]} or {terms[2]} MUST ALWAYS be enclosed in parentheses in the Korean translation.
- Parentheses should be properly placed, ensuring consistency in parenthesizing across the entire sentence.
- Ensures the translation conveys the original meaning precisely and reads naturally and smoothly.
</criteria>

<instruction>
- Change all the letters within the parentheses in Korean sentences to lowercase.
- Evaluate the Korean translation of the provided English sentences.
- Check the consistency and correctness of parenthesization.
- Provide a score (0-10) based on the correctness and consistency of parenthesization as Korean term(English term).
- Offer specific improvement suggestions if the score is less than 10.
- DO NOT include any supplementary explanations.
- Check your output format again.
</instruction>

## Example Output:
english: The neural network uses backpropagation to optimize its weights.
korean: 신경망(neural network)은 역전파(backpropagation)를 사용하여 가중치(weight)를 최적화합니다.
score: 10/10
terms_check: [neural network: Yes, backpropagation: Yes, weight: Yes]
parentheses_count: 3
suggestions: No improvements needed / Suggest ensuring that "model compression" is translated as  "모델 압축(model compression)" and adjusting "모델 컴프레션" to "model compression" for consistency and clarity.

## Example Format:
1.
english: [English text using term "{terms[0]}"]
korean: [Korean translation using parentheses]
score: [X/10]
terms_check: [{terms[0]}: Yes/No, {terms[1]}: Yes/No, {terms[2]}: Yes/No]
parentheses_count: [Number of parentheses pairs in the Korean translation]
suggestions: [Suggest capturing the original meaning and nuances in the translation while adjusting the structure for natural flow and grammar]
2.
english: [English text using terms "{terms[0]}" and "{terms[1]}"]
korean: [Korean translation]
3.
...
(Continue this pattern for all 7 sentences)"#;

/// Marker line preceding appended inputs.
pub const INPUT_HEADER: &str = "## Input:";

fn fill_terms(template: &str, terms: &[String; 3]) -> String {
    template
        .replace("{terms[0]}", &terms[0])
        .replace("{terms[1]}", &terms[1])
        .replace("{terms[2]}", &terms[2])
}

pub fn writer_prompt(terms: &[String; 3], arxiv_summaries: &str) -> String {
    fill_terms(WRITER_TEMPLATE, terms).replace("{arxiv_summaries}", arxiv_summaries)
}

/// Reviewer feedback for one sentence from the previous round.
#[derive(Debug, Clone, PartialEq)]
pub struct Revision<'a> {
    pub previous: &'a str,
    pub score: u8,
    pub suggestions: &'a str,
}

pub fn translator_prompt(terms: &[String; 3], english: &[String], revisions: Option<&[Revision<'_>]>) -> String {
    let mut out = fill_terms(TRANSLATOR_TEMPLATE, terms);
    out.push_str("\n\n");
    out.push_str(INPUT_HEADER);
    out.push('\n');
    for (i, s) in english.iter().enumerate() {
        out.push_str(&format!("{}.english: {s}\n", i + 1));
    }
    if let Some(revs) = revisions {
        out.push_str("\n## Previous translation and evaluator feedback:\n");
        for (i, r) in revs.iter().enumerate() {
            out.push_str(&format!(
                "{}.korean: {}\nscore: {}/10\nsuggestions: {}\n",
                i + 1,
                r.previous,
                r.score,
                r.suggestions
            ));
        }
        out.push_str("Revise every translation, applying the suggestions, and output all 7 sentences.\n");
    }
    out
}

pub fn evaluator_prompt(terms: &[String; 3], pairs: &[(String, String)]) -> String {
    let mut out = fill_terms(EVALUATOR_TEMPLATE, terms);
    out.push_str("\n\n");
    out.push_str(INPUT_HEADER);
    out.push('\n');
    for (i, (en, ko)) in pairs.iter().enumerate() {
        out.push_str(&format!("{}.\nenglish: {en}\nkorean: {ko}\n", i + 1));
    }
    out
}

/// Follow-up message sent after a response that broke the output schema.
pub fn repair_prompt(problems: &[String]) -> String {
    let mut out = String::from("Your previous answer did not follow the required output format:\n");
    for p in problems {
        out.push_str("- ");
        out.push_str(p);
        out.push('\n');
    }
    out.push_str("Answer again with exactly 7 numbered items in the required format.");
    out
}
