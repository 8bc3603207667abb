#pragma once

#include "erank/corpus.hpp"
#include "erank/entmatch.hpp"
#include "erank/error.hpp"
#include "erank/evalkit.hpp"
#include "erank/features.hpp"
#include "erank/index.hpp"
#include "erank/io.hpp"
#include "erank/ltr.hpp"
#include "erank/parallel.hpp"
#include "erank/pipeline.hpp"
#include "erank/random.hpp"
#include "erank/report.hpp"
#include "erank/synthetic.hpp"
#include "erank/textrank.hpp"
#include "erank/transe.hpp"
