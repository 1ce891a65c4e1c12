#pragma once

#include "unisig/common.hpp"
#include "unisig/cost.hpp"
#include "unisig/heads.hpp"
#include "unisig/io.hpp"
#include "unisig/layers.hpp"
#include "unisig/metrics.hpp"
#include "unisig/model.hpp"
#include "unisig/patch_embed.hpp"
#include "unisig/quant.hpp"
#include "unisig/sigproc.hpp"
#include "unisig/synth.hpp"
#include "unisig/temporal.hpp"
#include "unisig/tensor.hpp"
#include "unisig/trainer.hpp"
#include "unisig/unifier.hpp"
