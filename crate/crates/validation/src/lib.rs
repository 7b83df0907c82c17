//! Holds the `acceptance` test target. It lives in its own package so that a
//! red gate does not stop the rest of the workspace tests from running.
