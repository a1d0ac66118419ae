#pragma once

#include <stdexcept>
#include <string>

namespace recaudit {

/// Bad run configuration (unknown metric name, inconsistent engine options, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent input data. Messages carry file/line context
/// where available.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A metric that is undefined for a particular user (e.g. AUC with no
/// negative candidates). Callers that aggregate treat this as an exclusion,
/// not a failure.
class UndefinedMetricError : public DataError {
 public:
  explicit UndefinedMetricError(const std::string& what) : DataError(what) {}
};

/// A group whose mean is undefined because every member is excluded for the
/// requested metric.
class UndefinedGroupError : public DataError {
 public:
  explicit UndefinedGroupError(const std::string& what) : DataError(what) {}
};

/// A search engine could not produce a result (fewer than two defined
/// groups, or no defined-fitness group was ever visited).
class SearchError : public std::runtime_error {
 public:
  explicit SearchError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace recaudit
