#![no_main]

//! Savestates that load must also run: a payload accepted by a core may not
//! make a later step or render panic.

use libfuzzer_sys::fuzz_target;
use rle_core::{ButtonMask, Core, CoreState};

fuzz_target!(|data: &[u8]| {
    let Ok(state) = CoreState::from_bytes(data) else {
        return;
    };
    assert_eq!(CoreState::from_bytes(&state.to_bytes()).unwrap(), state);
    let Ok(mut core) = Core::new(state.core_name()) else {
        return;
    };
    if core.deserialize(&state).is_err() {
        return;
    }
    let players = core.info().num_players;
    for i in 0..64u16 {
        if core.is_terminal() {
            break;
        }
        let actions = vec![ButtonMask::from_bits(i.wrapping_mul(0x9e37) & 0x0fff); players];
        core.step(&actions).unwrap();
    }
    let _ = core.render();
    let _ = core.state_vars();
});
