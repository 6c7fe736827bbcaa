#pragma once

#include "mimor/clustering.hpp"
#include "mimor/corpus.hpp"
#include "mimor/engines.hpp"
#include "mimor/error.hpp"
#include "mimor/evaluation.hpp"
#include "mimor/fusion.hpp"
#include "mimor/ranker.hpp"
#include "mimor/usermodel.hpp"
#include "mimor/index_dir.hpp"
