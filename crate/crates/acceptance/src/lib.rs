//! Holds the acceptance suite in `tests/acceptance.rs`; there is no library
//! code. The suite runs each numbered acceptance criterion and prints one
//! PASS/FAIL line per criterion.
