//! Hand-built networks shared by tests across modules.

use crate::network::{Branch, Bus, BusKind, Generator, Load, PowerNetwork};

pub(crate) fn bus(id: usize, kind: BusKind) -> Bus {
    Bus {
        id,
        kind,
        v_mag: 1.0,
        v_ang: 0.0,
        g_sh: 0.0,
        b_sh: 0.0,
        in_service: true,
    }
}

pub(crate) fn line(id: usize, from: usize, to: usize, x: f64, rating: f64) -> Branch {
    let b = -1.0 / x;
    Branch {
        id,
        from_bus: from,
        to_bus: to,
        g: 0.0,
        b,
        b_c: 0.0,
        rating,
        in_service: true,
    }
}

pub(crate) fn gen(bus: usize, p_set: f64, p_max: f64) -> Generator {
    Generator {
        bus,
        p_set,
        q_set: 0.0,
        p_max,
        p_min: 0.0,
        in_service: true,
    }
}

pub(crate) fn load(bus: usize, p: f64, q: f64) -> Load {
    Load {
        bus,
        p,
        q,
        scale: 1.0,
    }
}

/// Two areas joined by one tie line. Area A: slack bus 1 with a generator,
/// load bus 2. Area B: load bus 3, generator bus 4 (PV). The tie is branch 1
/// between buses 2 and 3.
pub(crate) fn two_area() -> PowerNetwork {
    PowerNetwork {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusKind::Slack),
            bus(2, BusKind::Pq),
            bus(3, BusKind::Pq),
            bus(4, BusKind::Pv),
        ],
        branches: vec![
            line(0, 1, 2, 0.1, 100.0),
            line(1, 2, 3, 0.1, 100.0),
            line(2, 3, 4, 0.1, 100.0),
        ],
        generators: vec![gen(1, 60.0, 100.0), gen(4, 40.0, 80.0)],
        loads: vec![load(2, 50.0, 5.0), load(3, 40.0, 4.0)],
    }
}

/// Three buses in a triangle. Tripping branch 0 (buses 1-2) reroutes the
/// bus-2 load through branch 2 (buses 2-3), whose 30 MVA rating cannot carry
/// it, while branch 1 (buses 1-3) survives.
pub(crate) fn triangle() -> PowerNetwork {
    PowerNetwork {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusKind::Slack),
            bus(2, BusKind::Pq),
            bus(3, BusKind::Pq),
        ],
        branches: vec![
            line(0, 1, 2, 0.1, 60.0),
            line(1, 1, 3, 0.1, 100.0),
            line(2, 2, 3, 0.1, 30.0),
        ],
        generators: vec![gen(1, 80.0, 200.0)],
        loads: vec![load(2, 50.0, 0.0), load(3, 30.0, 0.0)],
    }
}
