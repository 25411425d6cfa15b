#pragma once

#include <stdexcept>

namespace adhoc {

// A conditional query whose condition event has (numerically) zero mass.
class UnanswerableQueryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The scripted chat client was asked for a request it has no recording of.
class ReplayMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An elicitation stage failed for good: retry budget exhausted, or the
// chat backend refused the call.
class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File-level problems: missing paths, malformed JSON/CSV, unwritable output.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace adhoc
