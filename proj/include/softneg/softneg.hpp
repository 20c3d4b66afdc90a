#pragma once

#include "softneg/ablation.hpp"
#include "softneg/benchmark.hpp"
#include "softneg/checkpoint.hpp"
#include "softneg/clinical.hpp"
#include "softneg/corpus.hpp"
#include "softneg/encoders.hpp"
#include "softneg/graph.hpp"
#include "softneg/io.hpp"
#include "softneg/linalg.hpp"
#include "softneg/log.hpp"
#include "softneg/loss.hpp"
#include "softneg/negation.hpp"
#include "softneg/parallel.hpp"
#include "softneg/reports.hpp"
#include "softneg/rng.hpp"
#include "softneg/softlabel.hpp"
#include "softneg/trainer.hpp"
