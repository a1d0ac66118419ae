#pragma once

#include "recaudit/catalog.hpp"
#include "recaudit/dpso.hpp"
#include "recaudit/errors.hpp"
#include "recaudit/groupspace.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/mitigation.hpp"
#include "recaudit/report.hpp"
#include "recaudit/rng.hpp"
#include "recaudit/search.hpp"
#include "recaudit/syngen.hpp"
