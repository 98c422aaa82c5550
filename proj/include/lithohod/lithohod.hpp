#pragma once

#include "lithohod/grid.hpp"
#include "lithohod/layout_synth.hpp"
#include "lithohod/hotspot_oracle.hpp"
#include "lithohod/litho_proxy.hpp"
#include "lithohod/backbone.hpp"
#include "lithohod/cmf_fusion.hpp"
#include "lithohod/heads_anchors.hpp"
#include "lithohod/losses.hpp"
#include "lithohod/matching.hpp"
#include "lithohod/evaluation.hpp"
#include "lithohod/model.hpp"
#include "lithohod/dataset.hpp"
#include "lithohod/config.hpp"
#include "lithohod/checkpoint.hpp"
#include "lithohod/train.hpp"
