import numpy as np
import pytest

from diverseplan.geometry import ActorState, Pose2, Scene, straight_lane


def linear_history(x, y, heading, speed, steps=10, dt=0.1):
    """Past poses for an actor that has been moving at constant velocity."""
    k = np.arange(steps, 0, -1)
    return np.column_stack(
        [
            x - np.cos(heading) * speed * k * dt,
            y - np.sin(heading) * speed * k * dt,
            np.full(steps, heading),
        ]
    )


def make_actor(aid, x, y, heading=0.0, speed=0.0, actor_class="vehicle"):
    return ActorState(
        id=aid,
        pose=Pose2(x, y, heading),
        speed=speed,
        length=4.5,
        width=2.0,
        actor_class=actor_class,
    )


def simple_scene(actor_specs, lane_len=300.0, limit=8.0, sdv_x=0.0, sdv_speed=6.0):
    """Scene with a straight route lane and constant-velocity histories.

    actor_specs: sequence of (x, y, heading, speed).
    """
    lane = straight_lane((0, 0), (lane_len, 0), speed_limit=limit)
    actors = tuple(
        make_actor(i, x, y, h, v) for i, (x, y, h, v) in enumerate(actor_specs)
    )
    history = {a.id: linear_history(a.pose.x, a.pose.y, a.pose.heading, a.speed) for a in actors}
    sdv = ActorState(id=-1, pose=Pose2(sdv_x, 0, 0), speed=sdv_speed, length=5.0, width=2.0)
    return Scene(0.0, sdv, actors, (lane,), 0, history=history)


def constant_velocity_future(scene, steps=10, dt=0.5):
    """Ground-truth future: every actor keeps its current velocity."""
    t = dt * np.arange(1, steps + 1)
    rows = []
    for a in scene.actors:
        rows.append(
            np.column_stack(
                [
                    a.pose.x + np.cos(a.pose.heading) * a.speed * t,
                    a.pose.y + np.sin(a.pose.heading) * a.speed * t,
                ]
            )
        )
    return np.asarray(rows) if rows else np.zeros((0, steps, 2))


@pytest.fixture
def two_actor_scene():
    return simple_scene([(20.0, 0.0, 0.0, 5.0), (40.0, 3.5, np.pi, 4.0)])
