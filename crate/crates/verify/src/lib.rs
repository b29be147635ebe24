//! Holds the `acceptance` test target, which checks the numbered criteria
//! end to end against frozen oracles. Run it with
//! `cargo test -p dips-verify --test acceptance`.
