//! Prints the expert reference scores shipped in `rle_core::expert`.

use rle_core::env::EnvConfig;
use rle_core::expert::expert_reference;
use rle_core::harness::EvalProtocol;

fn main() -> rle_core::Result<()> {
    let protocol = EvalProtocol::default();
    for core in ["scroller", "racer", "duel"] {
        let mean = expert_reference(&EnvConfig::new(core, 0), &protocol)?;
        println!("(\"{core}\", {mean:?}),");
    }
    Ok(())
}
