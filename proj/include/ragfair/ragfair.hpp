#pragma once

#include "analysis.hpp"
#include "attribution.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "generation.hpp"
#include "hash.hpp"
#include "http.hpp"
#include "io.hpp"
#include "ledger.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "random.hpp"
#include "report.hpp"
#include "retrieval.hpp"
#include "synthetic.hpp"
#include "text.hpp"
