pub mod analyze;
pub mod optimize;
pub mod simulate;
pub mod validate;

/// Fixed-width float form used in all delimited and text output.
pub(crate) fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Optional float (standard errors): empty cell when absent.
pub(crate) fn opt6(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Text rendering of a value with its standard error.
pub(crate) fn with_stderr(mean: f64, stderr: Option<f64>) -> String {
    match stderr {
        Some(s) => format!("{mean:.6} (stderr {s:.6})"),
        None => format!("{mean:.6} (stderr n/a)"),
    }
}
