#pragma once

#include "xmopkit/collision.hpp"
#include "xmopkit/collision_data.hpp"
#include "xmopkit/common.hpp"
#include "xmopkit/demos.hpp"
#include "xmopkit/denoiser.hpp"
#include "xmopkit/diffusion.hpp"
#include "xmopkit/ik.hpp"
#include "xmopkit/kinematics.hpp"
#include "xmopkit/mpc.hpp"
#include "xmopkit/optimize.hpp"
#include "xmopkit/planner.hpp"
#include "xmopkit/policy.hpp"
#include "xmopkit/robot_model.hpp"
#include "xmopkit/tokens.hpp"
