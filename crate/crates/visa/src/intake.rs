//! Transcript sources for interactive use.

use std::io::BufRead;
use std::process::Command;

use visa_core::stages::{IntakeError, Transcript, TranscriptOrigin, TranscriptSource};

/// One transcript per input line; a blank line is a silent clip and end of
/// input exhausts the source.
#[derive(Debug)]
pub struct LineSource<R> {
    reader: R,
    origin: TranscriptOrigin,
}

impl<R: BufRead> LineSource<R> {
    pub fn new(reader: R, origin: TranscriptOrigin) -> Self {
        Self { reader, origin }
    }
}

/// Reads standard input.
pub fn stdin_source() -> LineSource<std::io::StdinLock<'static>> {
    LineSource::new(std::io::stdin().lock(), TranscriptOrigin::Stdin)
}

fn to_transcript(text: &str, origin: TranscriptOrigin) -> Transcript {
    let t = text.trim();
    if t.is_empty() {
        Transcript::silent(origin)
    } else {
        Transcript::spoken(t, origin)
    }
}

impl<R: BufRead> TranscriptSource for LineSource<R> {
    fn next_transcript(&mut self) -> Result<Transcript, IntakeError> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(IntakeError::SourceExhausted),
            Ok(_) => Ok(to_transcript(&line, self.origin)),
            Err(e) => Err(IntakeError::Failed(e.to_string())),
        }
    }
}

/// Runs an external recogniser once per clip and uses its standard output
/// as the transcript. Exit status 0 with empty output is a silent clip;
/// exit status 3 means the recording has ended.
#[derive(Debug, Clone)]
pub struct ExternalSttSource {
    program: String,
    args: Vec<String>,
    clip: u32,
}

/// Exit status an external recogniser uses to signal the end of input.
pub const EXTERNAL_STT_EOF: i32 = 3;

impl ExternalSttSource {
    /// `command` is split on whitespace; the clip index is passed in
    /// `VISA_CLIP`.
    pub fn new(command: &str) -> Result<Self, IntakeError> {
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts.next().ok_or_else(|| IntakeError::Failed("empty STT command".into()))?;
        Ok(Self { program, args: parts.collect(), clip: 0 })
    }
}

impl TranscriptSource for ExternalSttSource {
    fn next_transcript(&mut self) -> Result<Transcript, IntakeError> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .env("VISA_CLIP", self.clip.to_string())
            .output()
            .map_err(|e| IntakeError::Failed(format!("{}: {e}", self.program)))?;
        self.clip += 1;
        match out.status.code() {
            Some(0) => Ok(to_transcript(&String::from_utf8_lossy(&out.stdout), TranscriptOrigin::ExternalStt)),
            Some(EXTERNAL_STT_EOF) => Err(IntakeError::SourceExhausted),
            code => Err(IntakeError::Failed(format!(
                "{} exited with {code:?}: {}",
                self.program,
                String::from_utf8_lossy(&out.stderr).trim()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_blank_lines_and_eof() {
        let mut s = LineSource::new("Zoom in\n\n  Rotate up  \n".as_bytes(), TranscriptOrigin::Stdin);
        assert_eq!(s.next_transcript().unwrap().text.as_deref(), Some("Zoom in"));
        assert_eq!(s.next_transcript().unwrap().text, None);
        let t = s.next_transcript().unwrap();
        assert_eq!((t.text.as_deref(), t.source), (Some("Rotate up"), TranscriptOrigin::Stdin));
        assert_eq!(s.next_transcript(), Err(IntakeError::SourceExhausted));
    }

    #[cfg(unix)]
    #[test]
    fn external_recogniser_protocol() {
        let mut s = ExternalSttSource::new("sh -c echo_$VISA_CLIP").unwrap();
        // `sh -c echo_0` fails: unknown command → Failed.
        assert!(matches!(s.next_transcript(), Err(IntakeError::Failed(_))));

        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("stt.sh");
        std::fs::write(&script, "case $VISA_CLIP in 0) echo 'Show the CT views';; 1) echo;; *) exit 3;; esac\n").unwrap();
        let mut s = ExternalSttSource::new(&format!("sh {}", script.display())).unwrap();
        let first = s.next_transcript().unwrap();
        assert_eq!((first.text.as_deref(), first.source), (Some("Show the CT views"), TranscriptOrigin::ExternalStt));
        assert_eq!(s.next_transcript().unwrap().text, None);
        assert_eq!(s.next_transcript(), Err(IntakeError::SourceExhausted));
        assert!(ExternalSttSource::new("  ").is_err());
    }
}
