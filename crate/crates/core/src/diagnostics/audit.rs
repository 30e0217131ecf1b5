//! Audit entries: one inequality `lhs ≤ rhs` with a relative slack.

/// Slack for inequalities whose two sides both come from a simulation.
pub const SIMULATION_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub name: String,
    /// The inequality being checked, written out.
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `rhs + slack·|rhs| − lhs`; the entry passes iff this is `≥ 0`.
    pub margin: f64,
    pub pass: bool,
    /// Where the worst sample sat, or why the entry failed.
    pub detail: String,
}

impl AuditEntry {
    pub fn new(name: &str, anchor: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        let margin = margin(lhs, rhs, slack);
        Self {
            name: name.to_string(),
            anchor: anchor.to_string(),
            lhs,
            rhs,
            slack,
            margin,
            pass: margin >= 0.0,
            detail: String::new(),
        }
    }

    /// Checks `(t, lhs, rhs)` samples and keeps the one with the least margin.
    /// No samples means nothing to violate.
    pub fn worst_of(
        name: &str,
        anchor: &str,
        samples: impl IntoIterator<Item = (f64, f64, f64)>,
        slack: f64,
    ) -> Self {
        let mut worst: Option<(f64, f64, f64, f64)> = None;
        let mut count = 0usize;
        for (t, lhs, rhs) in samples {
            count += 1;
            let m = margin(lhs, rhs, slack);
            if worst.is_none_or(|w| m < w.3 || m.is_nan()) {
                worst = Some((t, lhs, rhs, m));
            }
        }
        match worst {
            Some((t, lhs, rhs, _)) => Self::new(name, anchor, lhs, rhs, slack)
                .with_detail(format!("worst at t = {t:.4} of {count} samples")),
            None => {
                Self::new(name, anchor, 0.0, 0.0, slack).with_detail("no samples in range".into())
            }
        }
    }

    pub fn with_detail(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }

    /// Recomputes the pass flag from the stored numbers.
    pub fn recheck(&self) -> bool {
        margin(self.lhs, self.rhs, self.slack) >= 0.0
    }
}

fn margin(lhs: f64, rhs: f64, slack: f64) -> f64 {
    let m = rhs + slack * rhs.abs() - lhs;
    if m.is_nan() {
        f64::NEG_INFINITY
    } else {
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub decay: Option<super::DecayFit>,
    pub growth: Option<super::GrowthFit>,
    pub gronwall_prefactor: Option<f64>,
}

impl AuditReport {
    pub fn push(&mut self, entry: AuditEntry) {
        self.entries.push(entry);
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_rule() {
        assert!(AuditEntry::new("a", "", 1.0, 1.0, 0.0).pass);
        assert!(!AuditEntry::new("a", "", 1.06, 1.0, 0.05).pass);
        assert!(AuditEntry::new("a", "", 1.04, 1.0, 0.05).pass);
        // negative right-hand sides still loosen with slack
        assert!(AuditEntry::new("a", "", -0.96, -1.0, 0.05).pass);
        assert!(!AuditEntry::new("a", "", f64::NAN, 1.0, 0.05).pass);
    }

    #[test]
    fn worst_sample_is_reported() {
        let e = AuditEntry::worst_of(
            "w",
            "",
            [(0.0, 0.0, 1.0), (1.0, 0.9, 1.0), (2.0, 0.5, 1.0)],
            0.0,
        );
        assert_eq!(e.lhs, 0.9);
        assert!(e.pass);
        assert!(e.detail.contains("t = 1.0000"));
        let empty = AuditEntry::worst_of("w", "", std::iter::empty(), 0.0);
        assert!(empty.pass);
    }
}
