from .execute import PlanRunner
from .plan import ExecutionPlan, Fragment, StarGroup, build_stars, explain_plan, plan_query
from .platform import ChangeEvent, ChangeFeed, ConsistencyReport, Follower, Platform, WriteReport

__all__ = [
    "ChangeEvent",
    "ChangeFeed",
    "ConsistencyReport",
    "ExecutionPlan",
    "Follower",
    "Fragment",
    "PlanRunner",
    "Platform",
    "StarGroup",
    "WriteReport",
    "build_stars",
    "explain_plan",
    "plan_query",
]
