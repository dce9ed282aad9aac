pub mod analyze;
pub mod count;
pub mod fit;
pub mod misc;
pub mod predict;
pub mod simulate;

/// Maps "nothing to post-select on" failures to `None`; other errors propagate.
pub fn soft<T>(r: tbell::Result<T>) -> tbell::Result<Option<T>> {
    use tbell::Error as E;
    match r {
        Ok(v) => Ok(Some(v)),
        Err(E::ZeroPostSelection | E::ZeroDenominator(_) | E::NoClicks) => Ok(None),
        Err(e) => Err(e),
    }
}
