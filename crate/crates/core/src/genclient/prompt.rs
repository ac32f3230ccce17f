use crate::corpus::{Problem, PromptVariant};

const PREAMBLE: &str = "Solve the following programming problem in Python 3. \
The program must read from standard input and write to standard output.";

const CLOSING: &str = "Answer with the complete program in a single ```python code block.";

/// Prompt for `problem`; `WithExamples` appends the public test pairs.
pub fn build_prompt(problem: &Problem, variant: PromptVariant) -> String {
    let mut out = String::new();
    out.push_str(PREAMBLE);
    out.push_str("\n\n# Problem\n\n");
    out.push_str(problem.statement.trim_end());
    out.push('\n');
    if variant == PromptVariant::WithExamples {
        for (i, t) in problem.public_tests.iter().enumerate() {
            out.push_str(&format!("\n# Example {}\n\nInput:\n```\n", i + 1));
            push_block(&mut out, &t.input);
            out.push_str("```\n\nOutput:\n```\n");
            push_block(&mut out, &t.expected_output);
            out.push_str("```\n");
        }
    }
    out.push('\n');
    out.push_str(CLOSING);
    out.push('\n');
    out
}

fn push_block(out: &mut String, bytes: &[u8]) {
    let text = String::from_utf8_lossy(bytes);
    out.push_str(&text);
    if !text.ends_with('\n') {
        out.push('\n');
    }
}

/// Body of the first fenced code block, or the whole completion if there is none.
pub fn extract_code(completion: &str) -> String {
    let mut lines = completion.split_inclusive('\n');
    for line in lines.by_ref() {
        if line.trim_start().starts_with("```") {
            let mut body = String::new();
            for inner in lines.by_ref() {
                if inner.trim_start().starts_with("```") {
                    return body;
                }
                body.push_str(inner);
            }
            // Unterminated fence: keep everything after the opener.
            return body;
        }
    }
    completion.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TestCase;

    fn problem() -> Problem {
        Problem {
            problem_id: "p".into(),
            statement: "Add two numbers.\n".into(),
            public_tests: vec![TestCase {
                test_id: "1".into(),
                input: b"1 2\n".to_vec(),
                expected_output: b"3\n".to_vec(),
            }],
            private_tests: vec![],
        }
    }

    #[test]
    fn examples_toggle() {
        let with = build_prompt(&problem(), PromptVariant::WithExamples);
        let without = build_prompt(&problem(), PromptVariant::WithoutExamples);
        assert!(with.contains("Add two numbers."));
        assert!(with.contains("Input:\n```\n1 2\n```"));
        assert!(with.contains("Output:\n```\n3\n```"));
        assert!(without.contains("Add two numbers."));
        assert!(!without.contains("1 2"));
    }

    #[test]
    fn extracts_first_fence() {
        let text = "Here you go:\n```python\nprint(1)\n```\nand\n```\nprint(2)\n```\n";
        assert_eq!(extract_code(text), "print(1)\n");
        assert_eq!(extract_code("print(3)\n"), "print(3)\n");
        assert_eq!(extract_code("```\nx = 1\n"), "x = 1\n");
        assert_eq!(extract_code(""), "");
    }
}
