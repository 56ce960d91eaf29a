#pragma once

#include "turbo/allocator.hpp"
#include "turbo/gen.hpp"
#include "turbo/policy.hpp"
#include "turbo/profiles.hpp"
#include "turbo/runtime/client.hpp"
#include "turbo/runtime/link_monitor.hpp"
#include "turbo/runtime/server.hpp"
#include "turbo/runtime/shaper.hpp"
#include "turbo/runtime/token_bucket.hpp"
#include "turbo/runtime/wire.hpp"
#include "turbo/simulator.hpp"
#include "turbo/utility.hpp"
