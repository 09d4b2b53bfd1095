//! Processing log shared by the text and vision pipelines.
//!
//! Two kinds of event are recorded: per-stage progress lines
//! (`STAGE <name> <sample-id>`), which only accumulate when verbose mode
//! is on because they fire for every sample, and truncation notices
//! (`TRUNCATED <sample-id> <original-len>`), which are always kept —
//! silently cutting an input short is worth a line in any run.

#[derive(Debug, Default)]
pub struct Trace {
    verbose: bool,
    lines: Vec<String>,
}

impl Trace {
    pub fn new(verbose: bool) -> Self {
        Trace {
            verbose,
            lines: Vec::new(),
        }
    }

    pub fn verbose(&self) -> bool {
        self.verbose
    }

    /// Logs that `sample_id` passed through pipeline stage `name`.
    pub fn stage(&mut self, name: &str, sample_id: &str) {
        if self.verbose {
            self.lines.push(format!("STAGE {name} {sample_id}"));
        }
    }

    /// Logs that a sequence was cut from `original_len` to the model limit.
    pub fn truncated(&mut self, sample_id: &str, original_len: usize) {
        self.lines
            .push(format!("TRUNCATED {sample_id} {original_len}"));
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lines_respect_verbosity_but_truncations_always_log() {
        let mut quiet = Trace::new(false);
        quiet.stage("resize", "s1");
        quiet.truncated("s1", 90);
        assert_eq!(quiet.lines(), &["TRUNCATED s1 90".to_string()]);

        let mut loud = Trace::new(true);
        loud.stage("resize", "s1");
        loud.stage("augment", "s1");
        assert_eq!(loud.render(), "STAGE resize s1\nSTAGE augment s1\n");
    }
}
