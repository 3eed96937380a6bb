export * from './tensor.js';
export * from './flows.js';
export * from './bridge.js';
export * from './stub.js';
