//! Text model formats.
//!
//! Cascade: `HAAR1 w0 h0 nStages`, then per stage `STAGE threshold nWeak`,
//! per weak classifier `WEAK nRects fThresh left right` followed by nRects
//! lines `x y w h weight`. HOG: `HOG1 bias hitThreshold` followed by the
//! 3780 weights. Tokens are whitespace separated; lines starting with `#`
//! are comments.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::cascade::{HaarCascade, HaarRect, Stage, WeakClassifier};
use super::hog::{HogModel, DESCRIPTOR_LEN};
use super::DetectError;

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim_start().starts_with('#'))
            .flat_map(|(n, l)| l.split_whitespace().map(move |t| (n + 1, t)))
            .collect();
        Tokens { items, pos: 0 }
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).or(self.items.last()).map_or(1, |(n, _)| *n)
    }

    fn err(&self, msg: impl Into<String>) -> DetectError {
        DetectError::Parse { line: self.line(), msg: msg.into() }
    }

    fn word(&mut self) -> Result<&'a str, DetectError> {
        let t = self.items.get(self.pos).map(|(_, t)| *t).ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(t)
    }

    fn keyword(&mut self, expected: &str) -> Result<(), DetectError> {
        let w = self.word()?;
        if w == expected {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected {expected}, found {w:?}")))
        }
    }

    fn value<T: FromStr>(&mut self, what: &str) -> Result<T, DetectError> {
        let w = self.word()?;
        w.parse().map_err(|_| {
            self.pos -= 1;
            self.err(format!("bad {what} {w:?}"))
        })
    }

    fn finish(&self) -> Result<(), DetectError> {
        if self.pos < self.items.len() {
            return Err(self.err(format!("unexpected trailing token {:?}", self.items[self.pos].1)));
        }
        Ok(())
    }
}

pub fn parse_cascade(text: &str) -> Result<HaarCascade, DetectError> {
    let mut t = Tokens::new(text);
    t.keyword("HAAR1")?;
    let base_width = t.value("base width")?;
    let base_height = t.value("base height")?;
    let n_stages: usize = t.value("stage count")?;
    let mut stages = Vec::with_capacity(n_stages.min(1024));
    for _ in 0..n_stages {
        t.keyword("STAGE")?;
        let threshold = t.value("stage threshold")?;
        let n_weak: usize = t.value("weak count")?;
        let mut weak = Vec::with_capacity(n_weak.min(4096));
        for _ in 0..n_weak {
            t.keyword("WEAK")?;
            let n_rects: usize = t.value("rect count")?;
            let threshold = t.value("feature threshold")?;
            let left = t.value("left value")?;
            let right = t.value("right value")?;
            let mut rects = Vec::with_capacity(n_rects.min(3));
            for _ in 0..n_rects {
                rects.push(HaarRect {
                    x: t.value("rect x")?,
                    y: t.value("rect y")?,
                    w: t.value("rect w")?,
                    h: t.value("rect h")?,
                    weight: t.value("rect weight")?,
                });
            }
            weak.push(WeakClassifier { rects, threshold, left, right });
        }
        stages.push(Stage { threshold, weak });
    }
    t.finish()?;
    let cascade = HaarCascade { base_width, base_height, stages };
    cascade.validate()?;
    Ok(cascade)
}

pub fn write_cascade(cascade: &HaarCascade, comment: &str) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "HAAR1 {} {} {}", cascade.base_width, cascade.base_height, cascade.stages.len());
    for stage in &cascade.stages {
        let _ = writeln!(out, "STAGE {} {}", stage.threshold, stage.weak.len());
        for w in &stage.weak {
            let _ = writeln!(out, "WEAK {} {} {} {}", w.rects.len(), w.threshold, w.left, w.right);
            for r in &w.rects {
                let _ = writeln!(out, "{} {} {} {} {}", r.x, r.y, r.w, r.h, r.weight);
            }
        }
    }
    out
}

pub fn parse_hog(text: &str) -> Result<HogModel, DetectError> {
    let mut t = Tokens::new(text);
    t.keyword("HOG1")?;
    let bias = t.value("bias")?;
    let hit_threshold = t.value("hit threshold")?;
    let mut weights = Vec::with_capacity(DESCRIPTOR_LEN);
    while weights.len() < DESCRIPTOR_LEN {
        weights.push(t.value("weight")?);
    }
    t.finish()?;
    let model = HogModel { weights, bias, hit_threshold };
    model.validate()?;
    Ok(model)
}

pub fn write_hog(model: &HogModel, comment: &str) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "HOG1 {} {}", model.bias, model.hit_threshold);
    for row in model.weights.chunks(9) {
        let line: Vec<String> = row.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

fn read(path: &Path) -> Result<String, DetectError> {
    std::fs::read_to_string(path).map_err(|e| DetectError::Io { path: path.to_path_buf(), reason: e.to_string() })
}

pub fn load_cascade(path: &Path) -> Result<HaarCascade, DetectError> {
    parse_cascade(&read(path)?)
}

pub fn load_hog(path: &Path) -> Result<HogModel, DetectError> {
    parse_hog(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "# tiny\nHAAR1 4 4 1\nSTAGE 0.5 1\nWEAK 2 0.25 1 0\n0 0 2 4 -1\n2 0 2 4 1\n";

    #[test]
    fn cascade_round_trip() {
        let c = parse_cascade(TINY).unwrap();
        assert_eq!(c.stages[0].weak[0].rects.len(), 2);
        assert_eq!(parse_cascade(&write_cascade(&c, "again")).unwrap(), c);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_cascade("HAAR1 4 4 1\nSTAGE x 1\n").unwrap_err();
        assert!(matches!(err, DetectError::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse_cascade("HOG1 1 2"), Err(DetectError::Parse { line: 1, .. })));
        let outside = TINY.replace("2 0 2 4 1", "3 0 2 4 1");
        assert!(matches!(parse_cascade(&outside), Err(DetectError::InvalidModel(_))));
    }

    #[test]
    fn hog_round_trip_and_length() {
        let m = HogModel { weights: (0..DESCRIPTOR_LEN).map(|i| i as f64 * 0.001 - 1.5).collect(), bias: -0.25, hit_threshold: 0.1 };
        assert_eq!(parse_hog(&write_hog(&m, "")).unwrap(), m);
        assert!(parse_hog("HOG1 0 0 1 2 3").is_err());
    }
}
