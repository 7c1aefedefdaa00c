use crate::chain::{Chain, ChainParams, OutPoint, Transaction, TxBuilder, TxId};
use crate::contracts::{contract_address, ContractKind, ExchangeHeader, ExchangeId};
use crate::crypto::{keygen, role_seed, Address, ExchangeItem, Expectation, KeyPair, Scheme};

use super::ProtocolId;

const PAYMENT_NONCE: u64 = 1;
const ALICE_FUNDS: u64 = 1_000;

/// Everything the parties agreed on out of band before the exchange starts.
#[derive(Clone, Debug)]
pub struct Setup {
    pub protocol: ProtocolId,
    pub params: ChainParams,
    pub alice: KeyPair,
    pub bob: KeyPair,
    pub ttp: KeyPair,
    pub message: Vec<u8>,
    pub value: u64,
    /// P1 only: blocks between the offer's block and its expiry height.
    pub timeout_blocks: Option<u64>,
    pub header: ExchangeHeader,
    /// Alice's expectation: Bob's signature on `message`.
    pub e_a: Expectation,
    /// Bob's expectation: a payment of `value` to him.
    pub e_b: Expectation,
    pub ofe_contract: Option<Address>,
    pub sig_contract: Option<Address>,
    pub allocations: Vec<(Address, u64)>,
    pub genesis_txs: Vec<Transaction>,
    /// How long an honest party waits on its counterparty before giving up.
    pub patience: u64,
}

impl Setup {
    pub fn new(protocol: ProtocolId, params: ChainParams, seed: u64, timeout_blocks: Option<u64>, scheme: Scheme) -> Self {
        let alice = keygen(scheme, role_seed(seed, "alice"));
        let bob = keygen(scheme, role_seed(seed, "bob"));
        let ttp = keygen(scheme, role_seed(seed, "ttp"));
        let value = 100;
        let message = format!("receipt for {value} coins, exchange {seed}").into_bytes();
        let e_a = Expectation::Signature { expected_signer: bob.address, expected_message: message.clone() };
        let e_b = Expectation::Payment { expected_value: value, expected_payee: bob.address };
        let header = ExchangeHeader::new(alice.address, bob.address, &e_a, &e_b, seed);
        let mut genesis_txs = Vec::new();
        let mut ofe_contract = None;
        let mut sig_contract = None;
        if protocol.uses_ttp() {
            let deploy = TxBuilder::deploy(ContractKind::Ofe { ttp: ttp.address }).sign(&ttp);
            ofe_contract = Some(contract_address(&deploy.id.0));
            genesis_txs.push(deploy);
        }
        if protocol == ProtocolId::P3 {
            let deploy = TxBuilder::deploy(ContractKind::SigExchange).nonce(seed).sign(&alice);
            sig_contract = Some(contract_address(&deploy.id.0));
            genesis_txs.push(deploy);
        }
        let allocations = vec![(alice.address, ALICE_FUNDS), (bob.address, 0), (ttp.address, 0)];
        let k = params.confirm_depth.max(1);
        Setup {
            protocol,
            params,
            alice,
            bob,
            ttp,
            message,
            value,
            timeout_blocks,
            header,
            e_a,
            e_b,
            ofe_contract,
            sig_contract,
            allocations,
            genesis_txs,
            patience: (2 * k + 3) * params.block_interval_units,
        }
    }

    pub fn k(&self) -> u64 {
        self.params.confirm_depth
    }

    pub fn exchange_id(&self) -> ExchangeId {
        self.header.id()
    }

    pub fn genesis(&self) -> Chain {
        Chain::genesis(self.params, &self.allocations, self.genesis_txs.clone())
    }

    /// Alice's item i_A.
    pub fn payment(&self) -> Transaction {
        TxBuilder::payment(self.bob.address, self.value).nonce(PAYMENT_NONCE).sign(&self.alice)
    }

    /// A payment to herself that conflicts with i_A.
    pub fn double_spend(&self) -> Transaction {
        TxBuilder::payment(self.alice.address, self.value).nonce(PAYMENT_NONCE).sign(&self.alice)
    }

    /// Bob's item i_B.
    pub fn receipt(&self) -> ExchangeItem {
        ExchangeItem::receipt(&self.bob, &self.message)
    }

    /// Alice's reclaim of an offer. Fixed contents so Bob can predict its id.
    pub fn reclaim(&self, offer: TxId) -> TxBuilder {
        TxBuilder::claim(OutPoint { tx: offer, index: 0 }, 1)
    }

    pub fn reclaim_id(&self, offer: TxId) -> TxId {
        self.reclaim(offer).id_for(&self.alice.public)
    }

    /// Whether `sigma` is Bob's signature on the agreed message.
    pub fn valid_sigma(&self, sigma: &[u8]) -> bool {
        crate::crypto::verify(&self.bob.public, &self.message, sigma)
    }
}
